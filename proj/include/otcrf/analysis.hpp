#pragma once

// Verdicts over flow time series and the Gromov-Hausdorff collapse data.

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "otcrf/flow.hpp"
#include "otcrf/geom.hpp"
#include "otcrf/numfield.hpp"

namespace otcrf {

/// Least-squares line through (t, log v); rate = -slope, C = exp(intercept).
struct DecayFit {
  double rate = 0.0;
  double C = 0.0;
  double t0 = 0.0;
  double t1 = 0.0;
  double residual = 0.0;  // RMS of the log residuals
  std::size_t samples = 0;
};

/// Uses the samples with t0 <= t <= t1. Throws EmptyWindow for fewer than 3
/// samples and NonPositiveSeries if one of them is not positive.
DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& v, double t0, double t1);

struct BoundEntry {
  std::string name;
  std::string estimate;  // the inequality being tested
  std::string kind;      // "decay", "bounded" or "growth"
  double measured = 0.0;
  double threshold = 0.0;
  bool pass = false;
  double margin = 0.0;  // positive when passing
  std::string note;
};

struct BoundReport {
  std::vector<BoundEntry> entries;
  bool all_pass() const;
  const BoundEntry& at(const std::string& name) const;
};

struct BoundSettings {
  double window_start = 4.0;
  double bounded_factor = 5.0;
  double calabi_reference_time = 1.0;
  double phi_rate = 0.9;
  double phi_plus_phidot_rate = 0.2;
  double c0_rate = 0.1;
  double volume_rate = 0.9;
  double scalar_growth = 0.55;
};

/// Decay entries pass when the fitted rate on [window_start, t_end] reaches the
/// floor; a series that vanishes identically on the window passes. Bounded
/// entries compare the maximum over the run with bounded_factor times the
/// initial value. The Calabi entry takes both the maximum and the reference
/// value from t >= calabi_reference_time.
BoundReport verify_bounds(const std::vector<ObservableRecord>& records, const BoundSettings& settings = {});

/// |Rm|_g of the reference metric e^{-t} lf + (1 - e^{-t}) alpha, maximised
/// over the sample points, at each time, and the fitted growth exponent.
struct CurvatureProbe {
  std::vector<double> times;
  std::vector<double> norms;
  double exponent = 0.0;
};

CurvatureProbe curvature_growth_probe(const MetricField& lf, const std::vector<Vec>& sample_y,
                                      const std::vector<double>& times, double c = 1.0);

/// Default sample points: y = exp(V^T xi) on a k x ... x k grid of xi.
std::vector<Vec> probe_points(const Mat& V, int k);

/// omega_OT plus 0.2 alpha-type perturbation: normalised matrix
/// (1 + 0.2 cos 2 pi xi_1) I + J on the base block and 0.2 cos(2 pi xi_1) in
/// the (1, m) entries; strongly flat with c = 1.
MetricField cross_term_reference(const OTStructure& ot);

struct Certificate {
  std::vector<double> target;
  LatticeApproximation approx;
};

struct FiberCollapse {
  double delta = 0.0;
  int coeff_bound = 0;
  std::vector<Certificate> certificates;
  double leaf_cost = 0.0;       // max over certificates of |sigma_m(a)|
  double base_eig_sup = 0.0;    // sup over the run of the base eigenvalue bound at y = 1
  std::vector<double> times;
  std::vector<double> proxy;    // fiber-diameter proxy at each time
  double threshold = 0.1;
  double t_star = 0.0;          // proxy < threshold for all t > t_star (infinite if never)
};

/// Fiber offsets used by default: the origin, the centre of the unit cube, the
/// midpoint of each axis edge and (0.25, 0.75, 0.25, ...), without repeats.
std::vector<std::vector<double>> default_fiber_targets(int dim);

/// Throws NoCertificate if some target has no approximation in the box.
std::vector<Certificate> fiber_certificates(const OTStructure& ot, const std::vector<std::vector<double>>& targets,
                                            double delta, int coeff_bound);

/// proxy(t) = sqrt(c e^{-t}) max_a |sigma_m(a)| + delta sqrt(base_eig(t)).
/// base_eig is bounded through lambda_max(g) <= lambda_max(g~) tr_{g~} g using
/// the recorded traces. t_star is found on the recorded times as the start of
/// the tail where the proxy stays below threshold, then refined inside the
/// last crossing interval with the exact leaf law and the largest base term
/// of the tail.
FiberCollapse fiber_collapse(const FlowModel& model, const std::vector<ObservableRecord>& records,
                             const std::vector<Certificate>& certificates, double delta, int coeff_bound,
                             double threshold = 0.1);

struct DistanceRow {
  std::size_t a = 0;
  std::size_t b = 0;
  double graph = 0.0;  // d_t from shortest paths
  double flat = 0.0;   // flat torus distance
  double deviation = 0.0;
};

struct DistanceTable {
  std::vector<DistanceRow> rows;
  double max_deviation = 0.0;
  double torus_diameter = 0.0;
  int stencil_radius = 1;
};

/// Grid-graph shortest paths for the real base metric ds^2 = (1/2) du^T K du of
/// the state, edges to all primitive offsets within the stencil radius.
std::vector<double> graph_distances(const FlowModel& model, const FlowState& state, std::size_t source,
                                    int stencil_radius);

double torus_diameter(const OTStructure& ot, int samples = 64);

/// Deterministic sample pairs of grid indices; the first pair is coincident.
std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(const Grid& grid, int count, unsigned seed = 7);

DistanceTable base_distance_compare(const FlowModel& model, const FlowState& state,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                    int stencil_radius = 3);

struct GHReport {
  DecayFit leaf_fit;
  FiberCollapse collapse;
  DistanceTable distances;
};

void write_bound_report(std::ostream& out, const BoundReport& report);
void write_bound_csv(std::ostream& out, const BoundReport& report);
void write_gh_report(std::ostream& out, const GHReport& report);
void write_gh_csv(std::ostream& out, const GHReport& report);

}  // namespace otcrf
