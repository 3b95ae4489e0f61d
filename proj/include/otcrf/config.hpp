#pragma once

// Declarative run files: INI-style sections of key = value lines. Values are
// JSON scalars or arrays; bare words are read as strings.

#include <iosfwd>
#include <string>
#include <vector>

#include "otcrf/analysis.hpp"
#include "otcrf/flow.hpp"

namespace otcrf {

struct PlotSpec {
  std::string series;
  bool log_y = true;
  std::vector<double> slopes;  // reference slope overlays on log plots
};

struct VerifySettings {
  BoundSettings bounds;
  double delta = 0.1;
  int fiber_bound = 30;
  double threshold = 0.1;
  int pairs = 20;
  unsigned seed = 7;
  int stencil_radius = 3;
};

struct RunConfig {
  std::string name;
  std::string field_path;  // resolved against the run file's directory
  FlowConfig flow;
  VerifySettings verify;
  std::vector<PlotSpec> plots;
};

/// Sections: [run] name, field; [grid] N; [time] t_end, stride, scheme, cfl,
/// dt_max, fixed_dt; [initial] rho = [[amp, [k1, ...]], ...]; [reference]
/// kind, alpha_amp, beta_amp; [verify] window_start, bounded_factor,
/// calabi_reference_time, delta, fiber_bound, threshold, pairs, seed,
/// stencil_radius; [plot.<series>] log_y, slopes. Unknown sections or keys
/// are ParseError, out-of-range values ConfigError.
RunConfig parse_run_config(std::istream& in, const std::string& source, const std::string& base_dir);
RunConfig load_run_config(const std::string& path);

/// Plots drawn when a run file has no [plot.*] sections.
std::vector<PlotSpec> default_plots();

}  // namespace otcrf
