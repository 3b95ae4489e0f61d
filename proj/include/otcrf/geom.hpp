#pragma once

// Hermitian metrics on the base-reduced manifold. A field is a function of
// y = (y_1, ..., y_{m-1}) only, returning the m x m matrix g_{i jbar}.
// Derivatives are taken in u = log y with fourth-order central stencils and
// converted through d/dz_i F(y) = -(i/2) dF/dy_i.

#include <complex>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "otcrf/numfield.hpp"

namespace otcrf {

using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

class MetricField {
 public:
  using Fn = std::function<CMat(const Vec& y)>;

  MetricField() = default;
  /// dim: matrix size; nvar: number of y variables (indices >= nvar never
  /// carry derivatives).
  MetricField(int dim, int nvar, std::string kind, Fn fn, bool block_diagonal_y_only);

  int dim() const { return dim_; }
  int nvar() const { return nvar_; }
  const std::string& kind() const { return kind_; }
  bool block_diagonal_y_only() const { return block_; }

  CMat operator()(const Vec& y) const { return fn_(y); }

 private:
  int dim_ = 0;
  int nvar_ = 0;
  std::string kind_;
  Fn fn_;
  bool block_ = false;
};

using ScalarFn = std::function<double(const Vec& y)>;

enum class FormKind { Alpha, Beta, Gamma, OmegaOT };

/// Closed-form alpha, beta, gamma and omega_OT at y (m = y.size() + 1).
CMat eval_form(FormKind kind, const Vec& y);

MetricField form_field(FormKind kind, int m);
MetricField constant_field(const CMat& g, int nvar);
/// e^{f(y)} base.
MetricField conformal(ScalarFn f, const MetricField& base);
/// a A + b B.
MetricField linear_combination(double a, const MetricField& A, double b, const MetricField& B);

/// Invariant field g = D M(xi) D with D = diag(1/(2y_1), ..., 1/(2y_{m-1}), sqrt(y_1...y_{m-1}))
/// and xi = V^{-T} log y taken mod 1. M is the normalised, periodic matrix.
MetricField invariant_field(const Mat& V, std::function<CMat(const Vec& xi)> normalised, std::string kind,
                            bool block_diagonal_y_only);

/// Same, with M given by samples on the uniform periodic grid (N points per
/// axis, row-major with the first axis slowest) and evaluated by
/// trigonometric interpolation.
MetricField grid_sampled(const Mat& V, int N, const std::vector<CMat>& samples);

/// Hermitian to 1e-12 (relative) and all leading principal minors positive
/// above 1e-14 relative to the diagonal product. Throws NonPositiveMetric.
void require_positive(const CMat& g);
bool is_positive(const CMat& g);

/// d/dz_i d/dzbar_j F for a scalar y-only function, dim x dim result.
CMat complex_hessian(const ScalarFn& F, const Vec& y, int dim, double h = 1e-3);

/// -d dbar log det g.
CMat chern_ricci(const MetricField& field, const Vec& y, double h = 1e-3);

/// g^{jbar i} Ric_{i jbar}.
double chern_scalar(const MetricField& field, const Vec& y, double h = 1e-3);

/// Density of Omega = c det diag(alpha block, y_1...y_{m-1}).
double volume_density(const Vec& y, double c = 1.0);

enum class Slot { Lower, LowerBar, Upper, UpperBar };

struct Tensor {
  int dim = 0;
  std::vector<Slot> slots;
  std::vector<Complex> data;  // row-major over slots

  Tensor() = default;
  Tensor(int dim, std::vector<Slot> slots);

  std::size_t rank() const { return slots.size(); }
  Complex& at(std::initializer_list<int> idx);
  Complex at(std::initializer_list<int> idx) const;
  std::size_t offset(const int* idx) const;
};

/// T_{i j lbar} = d_i g_{j lbar} - d_j g_{i lbar}.
Tensor torsion(const MetricField& field, const Vec& y, double h = 1e-3);

/// R_{i jbar k lbar} = -d_i d_jbar g_{k lbar} + g^{qbar p} d_i g_{k qbar} d_jbar g_{p lbar}.
Tensor curvature(const MetricField& field, const Vec& y, double h = 1e-3);

/// Christoffel symbols Gamma^k_{ij} = g^{k lbar} d_i g_{j lbar}, slots (Upper, Lower, Lower).
Tensor christoffel(const MetricField& field, const Vec& y, double h = 1e-3);

/// Full contraction of A with conj(A) using g^{-1} on lower slots and g on
/// upper slots.
double tensor_norm(const Tensor& A, const CMat& g);

/// g^{jbar i} g^{lbar k} R_{i jbar k lbar}.
double curvature_trace(const Tensor& R, const CMat& g);

/// g_{m mbar} / (y_1 ... y_{m-1}).
double wedge_ratio(const MetricField& field, const Vec& y);

struct Flattening {
  ScalarFn sigma;
  MetricField flattened;
};

Flattening conformal_flatten(const MetricField& field);

/// e^{-t} lf + (1 - e^{-t}) alpha. Throws NotStronglyFlat unless lf has
/// wedge ratio c at y = 1.
MetricField reference_metric(double t, const MetricField& lf, double c = 1.0);

/// |Gamma(g) - Gamma(gref)|_g. The difference of two connections is a tensor,
/// so the value does not depend on the chart.
double christoffel_difference_norm(const MetricField& g, const MetricField& gref, const Vec& y,
                                   double h = 1e-3);

/// Plain text dump: one line per component, indices then real and imaginary part.
void dump_tensor(std::ostream& out, const Tensor& T);
void dump_matrix(std::ostream& out, const CMat& g);

}  // namespace otcrf
