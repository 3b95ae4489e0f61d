#pragma once

// Static SVG line plots of one time-series column.

#include <iosfwd>
#include <string>
#include <vector>

#include "otcrf/config.hpp"
#include "otcrf/flow.hpp"

namespace otcrf {

/// Column of the record table by name; throws UnknownSeries.
std::vector<double> series_column(const std::vector<ObservableRecord>& records, const std::string& name);

/// Caption text: on log plots, the fitted rate on [window_start, t_end] and
/// its gap to each guide slope.
std::string plot_caption(const std::vector<ObservableRecord>& records, const PlotSpec& spec, double window_start);

/// Throws MissingInput for an empty table and UnknownSeries for a bad name.
/// Guide lines on log plots pass through the fitted value at window_start.
void write_svg(std::ostream& out, const std::vector<ObservableRecord>& records, const PlotSpec& spec,
               double window_start);

}  // namespace otcrf
