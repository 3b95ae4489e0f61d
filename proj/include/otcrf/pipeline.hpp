#pragma once

// Stages shared by the command-line tool and the acceptance suite.

#include <iosfwd>
#include <string>
#include <vector>

#include "otcrf/analysis.hpp"
#include "otcrf/config.hpp"
#include "otcrf/flow.hpp"
#include "otcrf/numfield.hpp"

namespace otcrf {

/// Builds the structure of a field file and writes its report. Errors carry
/// the source name as a prefix.
OTStructure construct(const FieldDefinition& def, std::ostream& report, const std::string& source);

/// Leaf-scale fit on [window_start, t_end], fiber certificates and proxy, and
/// base distances of the final state.
GHReport collapse_report(const FlowModel& model, const std::vector<ObservableRecord>& records,
                         const FlowState& final_state, const VerifySettings& settings);

struct Verdict {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Leaf rate within 0.001 of 1/2, finite t_star, and base-distance deviation
/// at most 0.05 of the torus diameter.
std::vector<Verdict> collapse_verdicts(const GHReport& report);

}  // namespace otcrf
