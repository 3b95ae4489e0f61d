#include "otcrf/geom.hpp"

#include <cmath>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "otcrf/error.hpp"

namespace otcrf {

namespace {

const Complex I(0.0, 1.0);

constexpr int kOff[4] = {-2, -1, 1, 2};
constexpr double kW1[4] = {1.0, -8.0, 8.0, -1.0};

// Fourth-order stencils in u for a function of u returning T.
template <class T, class F>
T d_u(const F& f, const Vec& u, int i, double h) {
  Vec v = u;
  T acc = T();
  bool first = true;
  for (int a = 0; a < 4; ++a) {
    v[i] = u[i] + kOff[a] * h;
    if (first) {
      acc = kW1[a] * f(v);
      first = false;
    } else {
      acc = acc + kW1[a] * f(v);
    }
  }
  return acc / (12.0 * h);
}

template <class T, class F>
T dd_u(const F& f, const Vec& u, int i, int j, double h) {
  Vec v = u;
  if (i == j) {
    constexpr double w[5] = {-1.0, 16.0, -30.0, 16.0, -1.0};
    T acc = T();
    for (int a = 0; a < 5; ++a) {
      v[i] = u[i] + (a - 2) * h;
      if (a == 0)
        acc = w[a] * f(v);
      else
        acc = acc + w[a] * f(v);
    }
    return acc / (12.0 * h * h);
  }
  T acc = T();
  bool first = true;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      v[i] = u[i] + kOff[a] * h;
      v[j] = u[j] + kOff[b] * h;
      const double w = kW1[a] * kW1[b];
      if (first) {
        acc = w * f(v);
        first = false;
      } else {
        acc = acc + w * f(v);
      }
    }
  return acc / (144.0 * h * h);
}

Vec to_u(const Vec& y) { return y.array().log().matrix(); }

auto in_u(const MetricField& field) {
  return [&field](const Vec& u) -> CMat { return field(u.array().exp().matrix()); };
}

double log_det(const CMat& g) {
  Eigen::LLT<CMat> llt(g);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NonPositiveMetric, "metric is not positive definite");
  double acc = 0.0;
  for (Eigen::Index k = 0; k < g.rows(); ++k) acc += std::log(llt.matrixL()(k, k).real());
  return 2.0 * acc;
}

struct FirstDerivs {
  std::vector<CMat> dz;     // d_i g, i < dim
  std::vector<CMat> dzbar;  // d_ibar g
};

FirstDerivs first_derivs(const MetricField& field, const Vec& y, double h) {
  const int dim = field.dim();
  const Vec u = to_u(y);
  auto f = in_u(field);
  FirstDerivs d;
  for (int i = 0; i < dim; ++i) {
    if (i < field.nvar()) {
      const CMat gu = d_u<CMat>(f, u, i, h);
      d.dz.push_back(-0.5 * I * std::exp(-u[i]) * gu);
      d.dzbar.push_back(0.5 * I * std::exp(-u[i]) * gu);
    } else {
      d.dz.push_back(CMat::Zero(dim, dim));
      d.dzbar.push_back(CMat::Zero(dim, dim));
    }
  }
  return d;
}

}  // namespace

MetricField::MetricField(int dim, int nvar, std::string kind, Fn fn, bool block_diagonal_y_only)
    : dim_(dim), nvar_(nvar), kind_(std::move(kind)), fn_(std::move(fn)), block_(block_diagonal_y_only) {}

CMat eval_form(FormKind kind, const Vec& y) {
  const int s = static_cast<int>(y.size());
  const int m = s + 1;
  CMat g = CMat::Zero(m, m);
  const bool a = kind == FormKind::Alpha || kind == FormKind::OmegaOT;
  const bool b = kind == FormKind::Beta || kind == FormKind::OmegaOT;
  const bool c = kind == FormKind::Gamma || kind == FormKind::OmegaOT;
  if (a)
    for (int i = 0; i < s; ++i) g(i, i) += 1.0 / (4.0 * y[i] * y[i]);
  if (c)
    for (int k = 0; k < s; ++k)
      for (int l = 0; l < s; ++l) g(k, l) += 1.0 / (4.0 * y[k] * y[l]);
  if (b) g(s, s) += y.prod();
  return g;
}

MetricField form_field(FormKind kind, int m) {
  static const char* names[] = {"alpha", "beta", "gamma", "omega_OT"};
  return MetricField(m, m - 1, names[static_cast<int>(kind)], [kind](const Vec& y) { return eval_form(kind, y); },
                     true);
}

MetricField constant_field(const CMat& g, int nvar) {
  return MetricField(static_cast<int>(g.rows()), nvar, "constant", [g](const Vec&) { return g; }, false);
}

MetricField conformal(ScalarFn f, const MetricField& base) {
  return MetricField(base.dim(), base.nvar(), "conformal(" + base.kind() + ")",
                     [f = std::move(f), base](const Vec& y) -> CMat { return std::exp(f(y)) * base(y); },
                     base.block_diagonal_y_only());
}

MetricField linear_combination(double a, const MetricField& A, double b, const MetricField& B) {
  return MetricField(A.dim(), A.nvar(), "combination",
                     [a, A, b, B](const Vec& y) -> CMat { return a * A(y) + b * B(y); },
                     A.block_diagonal_y_only() && B.block_diagonal_y_only());
}

namespace {

CVec scale_vector(const Vec& y) {
  const int s = static_cast<int>(y.size());
  CVec D(s + 1);
  for (int i = 0; i < s; ++i) D[i] = 1.0 / (2.0 * y[i]);
  D[s] = std::sqrt(y.prod());
  return D;
}

}  // namespace

MetricField invariant_field(const Mat& V, std::function<CMat(const Vec& xi)> normalised, std::string kind,
                            bool block_diagonal_y_only) {
  const Mat VtInv = V.transpose().inverse();
  const int m = static_cast<int>(V.rows()) + 1;
  return MetricField(m, m - 1, std::move(kind),
                     [VtInv, normalised = std::move(normalised)](const Vec& y) -> CMat {
                       const Vec xi = VtInv * to_u(y);
                       const CVec D = scale_vector(y);
                       return D.asDiagonal() * normalised(xi) * D.asDiagonal();
                     },
                     block_diagonal_y_only);
}

MetricField grid_sampled(const Mat& V, int N, const std::vector<CMat>& samples) {
  const int d = static_cast<int>(V.rows());
  std::size_t total = 1;
  for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(N);
  if (samples.size() != total) throw Error(ErrorCode::ConfigError, "grid sample count does not match N^d");

  // Separable DFT, one axis at a time.
  std::vector<CMat> coef = samples;
  std::size_t stride = total;
  for (int a = 0; a < d; ++a) {
    stride /= static_cast<std::size_t>(N);
    std::vector<CMat> out(total);
    for (std::size_t base = 0; base < total; ++base) {
      const std::size_t j = (base / stride) % N;
      if (j != 0) continue;
      for (int q = 0; q < N; ++q) {
        CMat acc = CMat::Zero(coef[0].rows(), coef[0].cols());
        for (int jj = 0; jj < N; ++jj)
          acc += std::polar(1.0 / N, -2.0 * M_PI * q * jj / N) * coef[base + jj * stride];
        out[base + q * stride] = acc;
      }
    }
    coef = std::move(out);
  }

  auto normalised = [coef = std::move(coef), N, d, total](const Vec& xi) -> CMat {
    std::vector<std::vector<Complex>> basis(d, std::vector<Complex>(N));
    for (int a = 0; a < d; ++a)
      for (int q = 0; q < N; ++q) {
        if (2 * q == N)
          basis[a][q] = std::cos(M_PI * N * xi[a]);
        else
          basis[a][q] = std::polar(1.0, 2.0 * M_PI * (2 * q < N ? q : q - N) * xi[a]);
      }
    CMat acc = CMat::Zero(coef[0].rows(), coef[0].cols());
    for (std::size_t k = 0; k < total; ++k) {
      std::size_t rest = k;
      Complex w = 1.0;
      for (int a = d - 1; a >= 0; --a) {
        w *= basis[a][rest % N];
        rest /= N;
      }
      acc += w * coef[k];
    }
    return 0.5 * (acc + acc.adjoint());
  };
  return invariant_field(V, std::move(normalised), "grid-sampled", false);
}

bool is_positive(const CMat& g) {
  if (g.rows() != g.cols() || g.rows() == 0) return false;
  const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
  if ((g - g.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
  double diag = 1.0;
  for (Eigen::Index k = 0; k < g.rows(); ++k) {
    const double gkk = g(k, k).real();
    if (!(gkk > 0.0)) return false;
    diag *= gkk;
    const double minor = g.topLeftCorner(k + 1, k + 1).determinant().real();
    if (!(minor > 1e-14 * diag)) return false;
  }
  return true;
}

void require_positive(const CMat& g) {
  if (!is_positive(g)) throw Error(ErrorCode::NonPositiveMetric, "metric matrix is not Hermitian positive definite");
}

CMat complex_hessian(const ScalarFn& F, const Vec& y, int dim, double h) {
  const int s = static_cast<int>(y.size());
  const Vec u = to_u(y);
  auto f = [&F](const Vec& v) { return F(v.array().exp().matrix()); };
  CMat out = CMat::Zero(dim, dim);
  for (int i = 0; i < s && i < dim; ++i) {
    const double fi = d_u<double>(f, u, i, h);
    for (int j = i; j < s && j < dim; ++j) {
      const double fij = dd_u<double>(f, u, i, j, h);
      const double v = 0.25 * std::exp(-u[i] - u[j]) * (fij - (i == j ? fi : 0.0));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

CMat chern_ricci(const MetricField& field, const Vec& y, double h) {
  require_positive(field(y));
  ScalarFn F = [&field](const Vec& yy) { return log_det(field(yy)); };
  const Vec yv = y.head(field.nvar());
  return -complex_hessian(F, yv, field.dim(), h);
}

double chern_scalar(const MetricField& field, const Vec& y, double h) {
  const CMat g = field(y);
  require_positive(g);
  const CMat ric = chern_ricci(field, y, h);
  return (g.inverse() * ric).trace().real();
}

double volume_density(const Vec& y, double c) {
  double v = c * y.prod();
  for (Eigen::Index i = 0; i < y.size(); ++i) v /= 4.0 * y[i] * y[i];
  return v;
}

Tensor::Tensor(int dim_, std::vector<Slot> slots_) : dim(dim_), slots(std::move(slots_)) {
  std::size_t n = 1;
  for (std::size_t k = 0; k < slots.size(); ++k) n *= static_cast<std::size_t>(dim);
  data.assign(n, Complex(0.0));
}

std::size_t Tensor::offset(const int* idx) const {
  std::size_t off = 0;
  for (std::size_t k = 0; k < slots.size(); ++k) off = off * dim + idx[k];
  return off;
}

Complex& Tensor::at(std::initializer_list<int> idx) { return data[offset(idx.begin())]; }
Complex Tensor::at(std::initializer_list<int> idx) const { return data[offset(idx.begin())]; }

Tensor torsion(const MetricField& field, const Vec& y, double h) {
  const int m = field.dim();
  const FirstDerivs d = first_derivs(field, y, h);
  Tensor T(m, {Slot::Lower, Slot::Lower, Slot::LowerBar});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int l = 0; l < m; ++l) T.at({i, j, l}) = d.dz[i](j, l) - d.dz[j](i, l);
  return T;
}

Tensor curvature(const MetricField& field, const Vec& y, double h) {
  const int m = field.dim();
  const CMat g = field(y);
  require_positive(g);
  const CMat H = g.inverse();
  const FirstDerivs d = first_derivs(field, y, h);
  const Vec u = to_u(y);
  auto f = in_u(field);

  Tensor R(m, {Slot::Lower, Slot::LowerBar, Slot::Lower, Slot::LowerBar});
  std::vector<CMat> gu;
  for (int i = 0; i < field.nvar(); ++i) gu.push_back(d_u<CMat>(f, u, i, h));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      CMat block = d.dz[i] * H * d.dzbar[j];
      if (i < field.nvar() && j < field.nvar()) {
        CMat guu = dd_u<CMat>(f, u, i, j, h);
        if (i == j) guu -= gu[i];
        block -= 0.25 * std::exp(-u[i] - u[j]) * guu;
      }
      for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l) R.at({i, j, k, l}) = block(k, l);
    }
  return R;
}

Tensor christoffel(const MetricField& field, const Vec& y, double h) {
  const int m = field.dim();
  const CMat g = field(y);
  require_positive(g);
  const CMat H = g.inverse();
  const FirstDerivs d = first_derivs(field, y, h);
  Tensor G(m, {Slot::Upper, Slot::Lower, Slot::Lower});
  for (int i = 0; i < m; ++i) {
    const CMat P = d.dz[i] * H;  // P(j,k) = Gamma^k_{ij}
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) G.at({k, i, j}) = P(j, k);
  }
  return G;
}

double tensor_norm(const Tensor& A, const CMat& g) {
  require_positive(g);
  const CMat H = g.inverse();
  const int m = A.dim;
  const std::size_t r = A.rank();
  std::vector<Complex> C = A.data;
  // contract one slot at a time: C_{..J..} = sum_I C_{..I..} w(I, J)
  std::size_t inner = C.size();
  for (std::size_t s = 0; s < r; ++s) {
    inner /= static_cast<std::size_t>(m);
    const std::size_t outer = C.size() / (inner * m);
    std::vector<Complex> next(C.size(), Complex(0.0));
    for (std::size_t o = 0; o < outer; ++o)
      for (int J = 0; J < m; ++J)
        for (int Ii = 0; Ii < m; ++Ii) {
          Complex w;
          switch (A.slots[s]) {
            case Slot::Lower: w = H(J, Ii); break;
            case Slot::LowerBar: w = H(Ii, J); break;
            case Slot::Upper: w = g(Ii, J); break;
            case Slot::UpperBar: w = g(J, Ii); break;
          }
          if (w == Complex(0.0)) continue;
          const std::size_t src = (o * m + Ii) * inner;
          const std::size_t dst = (o * m + J) * inner;
          for (std::size_t q = 0; q < inner; ++q) next[dst + q] += C[src + q] * w;
        }
    C = std::move(next);
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < C.size(); ++k) acc += (C[k] * std::conj(A.data[k])).real();
  return std::sqrt(std::max(0.0, acc));
}

double curvature_trace(const Tensor& R, const CMat& g) {
  const CMat H = g.inverse();
  const int m = R.dim;
  Complex acc = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l) acc += H(j, i) * H(l, k) * R.at({i, j, k, l});
  return acc.real();
}

double wedge_ratio(const MetricField& field, const Vec& y) {
  const CMat g = field(y);
  const int m = field.dim();
  return g(m - 1, m - 1).real() / y.head(m - 1).prod();
}

Flattening conformal_flatten(const MetricField& field) {
  Flattening out;
  out.sigma = [field](const Vec& y) {
    const double w = wedge_ratio(field, y);
    if (!(w > 0.0)) throw Error(ErrorCode::NonPositiveMetric, "leaf entry of the metric is not positive");
    return -std::log(w);
  };
  const int m = field.dim();
  out.flattened = MetricField(
      field.dim(), field.nvar(), "flattened(" + field.kind() + ")",
      [field, m](const Vec& y) -> CMat {
        const CMat g = field(y);
        const double w = g(m - 1, m - 1).real() / y.head(m - 1).prod();
        if (!(w > 0.0)) throw Error(ErrorCode::NonPositiveMetric, "leaf entry of the metric is not positive");
        CMat f = g / w;
        // the leaf entry is reset exactly so that flattening is idempotent
        f(m - 1, m - 1) = y.head(m - 1).prod();
        return f;
      },
      field.block_diagonal_y_only());
  return out;
}

MetricField reference_metric(double t, const MetricField& lf, double c) {
  const Vec ones = Vec::Ones(lf.nvar());
  const double w = wedge_ratio(lf, ones);
  if (std::abs(w - c) > 1e-10 * std::max(1.0, c))
    throw Error(ErrorCode::NotStronglyFlat,
                fmt::format("leaf metric has wedge ratio {} at y = 1, expected the constant {}", w, c));
  const double e = std::exp(-t);
  const MetricField alpha = form_field(FormKind::Alpha, lf.dim());
  return MetricField(lf.dim(), lf.nvar(), "reference",
                     [lf, alpha, e](const Vec& y) -> CMat { return e * lf(y) + (1.0 - e) * alpha(y); },
                     lf.block_diagonal_y_only());
}

double christoffel_difference_norm(const MetricField& g, const MetricField& gref, const Vec& y, double h) {
  Tensor a = christoffel(g, y, h);
  const Tensor b = christoffel(gref, y, h);
  for (std::size_t k = 0; k < a.data.size(); ++k) a.data[k] -= b.data[k];
  return tensor_norm(a, g(y));
}

void dump_tensor(std::ostream& out, const Tensor& T) {
  const std::size_t r = T.rank();
  std::vector<int> idx(r, 0);
  for (std::size_t k = 0; k < T.data.size(); ++k) {
    std::size_t rest = k;
    for (std::size_t s = r; s-- > 0;) {
      idx[s] = static_cast<int>(rest % T.dim);
      rest /= T.dim;
    }
    for (int i : idx) out << i << ' ';
    fmt::print(out, "{:.17g} {:.17g}\n", T.data[k].real(), T.data[k].imag());
  }
}

void dump_matrix(std::ostream& out, const CMat& g) {
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      fmt::print(out, "{}{:.17g} {:.17g}", j ? "  " : "", g(i, j).real(), g(i, j).imag());
    out << '\n';
  }
}

}  // namespace otcrf
