#pragma once

// Reduced parabolic Monge-Ampere flow on the base torus. Everything is kept
// in the normalised frame g = D K D, D = diag(1/(2y_1), ..., 1/(2y_{m-1})),
// where the y factors cancel and all fields are periodic in xi.

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "otcrf/geom.hpp"
#include "otcrf/kernels.hpp"
#include "otcrf/numfield.hpp"

namespace otcrf {

/// amp * cos(2 pi k . xi)
struct RhoTerm {
  double amp = 0.0;
  std::vector<int> k;
};

enum class Scheme { Euler, RK2 };

Scheme parse_scheme(const std::string& name);
std::string_view scheme_name(Scheme s);

/// ot: omega_LF = omega_OT. perturbed: flatten((1 + a cos 2 pi xi_1) alpha +
/// gamma + (1 + b sin 2 pi xi_2) beta).
struct ReferenceSpec {
  std::string kind = "ot";
  double alpha_amp = 0.0;
  double beta_amp = 0.0;
};

struct FlowConfig {
  double t_end = 12.0;
  double cfl = 0.2;
  double stride = 0.5;
  double dt_max = 0.01;
  double fixed_dt = 0.0;  // > 0 disables the adaptive rule
  Scheme scheme = Scheme::Euler;
  int N = 64;
  std::vector<RhoTerm> rho;
  ReferenceSpec reference;
  bool parallel = true;
};

/// Throws ConfigError on out-of-range values.
void validate_config(const FlowConfig& cfg);

/// Grid, reference data and initial potential of one run.
class FlowModel {
 public:
  FlowModel(const OTStructure& ot, const FlowConfig& cfg);

  const Grid& grid() const { return grid_; }
  const FlowConfig& config() const { return cfg_; }
  const OTStructure& ot() const { return ot_; }
  int d() const { return grid_.d; }
  double c() const { return ot_.c; }

  /// Normalised base block of omega_LF, size * d * d.
  const std::vector<double>& lf_block() const { return lf_; }
  /// rho sampled on the grid.
  const std::vector<double>& rho() const { return rho_; }
  /// Normalised omega_0 = omega_LF + d dbar rho, size * d * d.
  const std::vector<double>& k0() const { return k0_; }

  /// Flattened leaf metric as a geom field.
  MetricField leaf_metric() const;

  Mat lf_at(std::size_t p) const;
  /// e^{-t} M_LF + (1 - e^{-t}) I.
  Mat ref_block(std::size_t p, double t) const;
  /// ref_block + Hhat(phi).
  Mat K(const std::vector<double>& phi, std::size_t p, double t) const;
  /// Full m x m normalised matrix diag(K, c e^{-t}).
  Mat normalised_metric(const std::vector<double>& phi, std::size_t p, double t) const;

  /// Evaluates the velocity at phi = mean + psi, split into its grid average
  /// rhs_mean and the zero-mean remainder dpsi. Returns false if K fails to be
  /// positive somewhere; lam_min receives the smallest eigenvalue of K.
  bool rhs(const std::vector<double>& psi, double mean, double t, std::vector<double>& dpsi, double& lam_min,
           double& rhs_mean) const;

  /// Scale of the difference operator: sum_ab |(W^T W)_ab|.
  double operator_scale() const { return op_scale_; }

 private:
  OTStructure ot_;
  FlowConfig cfg_;
  Grid grid_;
  std::vector<double> lf_;
  std::vector<double> rho_;
  std::vector<double> k0_;
  double op_scale_ = 0.0;
  bool lf_uniform_ = false;
};

/// The potential is stored as its grid mean plus a zero-mean fluctuation so
/// that the decaying spatial part keeps full relative precision.
struct FlowState {
  std::vector<double> psi;
  double mean = 0.0;
  std::vector<double> dpsi;  // velocity minus its grid average
  double rhs_mean = 0.0;
  double t = 0.0;
  double dt_last = 0.0;
  double lam_min = 0.0;
  std::size_t steps = 0;
  std::size_t rhs_evals = 0;
  std::size_t halvings = 0;

  std::vector<double> phi() const;
  std::vector<double> phidot() const;
};

/// phi = rho; throws InitialMetricNotPositive if omega_0 is not positive.
FlowState init_state(const FlowModel& model);

/// H_{ij} = e^{-u_i-u_j}(d_{u_i} d_{u_j} phi - delta_ij d_{u_i} phi) at grid
/// point p, with y taken from xi_p. The complex Hessian block is H/4.
Mat reduced_hessian(const FlowModel& model, const std::vector<double>& phi, std::size_t p);

/// Step size the adaptive rule would take from this state.
double adaptive_dt(const FlowModel& model, const FlowState& state);

/// One step of at most dt_cap. Halves on positivity failure, up to 20 times.
void step(const FlowModel& model, FlowState& state, double dt_cap);

struct ObservableRecord {
  double t = 0.0;
  double sup_phi = 0.0;
  double sup_phidot = 0.0;
  double sup_phi_plus_phidot = 0.0;
  double max_tr_ref_omega = 0.0;  // tr_{omega~} omega
  double max_tr_omega_ref = 0.0;  // tr_omega omega~
  double c0_distance = 0.0;       // |omega - omega~| measured in omega_0
  double r_min = 0.0;
  double r_max = 0.0;
  double calabi = 0.0;            // |Gamma - Gamma~|^2_g
  double leaf_scale = 0.0;        // sqrt(g_{m mbar}) at y = 1
  double volume_dev = 0.0;        // sup |e^t omega~^m / Omega - 1|
  double c1_norm = 0.0;           // |g|_{omega_OT} + |d g|_{omega_OT}

  static constexpr std::size_t kColumns = 13;
  static const std::array<std::string_view, kColumns>& names();
  std::array<double, kColumns> values() const;
  static ObservableRecord from_values(const std::array<double, kColumns>& v);
};

ObservableRecord observables(const FlowModel& model, const FlowState& state);

struct TimeSeries {
  std::vector<ObservableRecord> records;
  FlowState final_state;
};

using ProgressFn = std::function<void(const FlowState&)>;

/// Records at every multiple of the stride up to t_end. Throws
/// FlowDegenerateError with the failure time.
TimeSeries run(const FlowModel& model, const ProgressFn& progress = {});
TimeSeries run(const OTStructure& ot, const FlowConfig& cfg, const ProgressFn& progress = {});

inline constexpr std::string_view kCsvSchema = "otcrf-timeseries/1";

void write_csv(std::ostream& out, const std::vector<ObservableRecord>& records);
/// Throws SchemaMismatch on a different schema line, ParseError otherwise.
std::vector<ObservableRecord> read_csv(std::istream& in, const std::string& source = "<csv>");

/// Potential dump: header lines then one value per grid point.
void write_state(std::ostream& out, const FlowState& state, int N, int d);
FlowState read_state(std::istream& in, int N, int d, const std::string& source = "<state>");

}  // namespace otcrf
