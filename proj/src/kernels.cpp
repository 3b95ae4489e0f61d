#include "otcrf/kernels.hpp"

#include <cmath>
#include <limits>

#include "otcrf/error.hpp"

namespace otcrf {

Grid::Grid(const Eigen::MatrixXd& V_, int N_) : d(static_cast<int>(V_.rows())), N(N_), V(V_) {
  if (N < 4) throw Error(ErrorCode::ConfigError, "grid resolution must be at least 4");
  if (V.rows() != V.cols() || d < 1) throw Error(ErrorCode::ConfigError, "lattice basis must be square");
  if (std::abs(V.determinant()) < 1e-12) throw Error(ErrorCode::ConfigError, "lattice basis is singular");
  W = V.inverse();
  h = 1.0 / N;
  size = 1;
  for (int a = 0; a < d; ++a) size *= static_cast<std::size_t>(N);
  plus.resize(size * d);
  minus.resize(size * d);
  std::size_t stride = size;
  for (int a = 0; a < d; ++a) {
    stride /= static_cast<std::size_t>(N);
    for (std::size_t p = 0; p < size; ++p) {
      const std::size_t j = (p / stride) % N;
      const std::size_t base = p - j * stride;
      plus[a * size + p] = static_cast<std::uint32_t>(base + ((j + 1) % N) * stride);
      minus[a * size + p] = static_cast<std::uint32_t>(base + ((j + N - 1) % N) * stride);
    }
  }
  diag.resize(size * 2 * d * (d - 1));
  std::size_t pair = 0;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < a; ++b, ++pair) {
      std::uint32_t* t = diag.data() + pair * 4 * size;
      for (std::size_t p = 0; p < size; ++p) {
        const std::uint32_t pa = plus[a * size + p], ma = minus[a * size + p];
        t[p] = plus[b * size + pa];
        t[size + p] = minus[b * size + pa];
        t[2 * size + p] = plus[b * size + ma];
        t[3 * size + p] = minus[b * size + ma];
      }
    }
}

std::vector<int> Grid::coords(std::size_t p) const {
  std::vector<int> c(d);
  for (int a = d - 1; a >= 0; --a) {
    c[a] = static_cast<int>(p % N);
    p /= N;
  }
  return c;
}

Eigen::VectorXd Grid::xi(std::size_t p) const {
  const auto c = coords(p);
  Eigen::VectorXd x(d);
  for (int a = 0; a < d; ++a) x[a] = c[a] * h;
  return x;
}

std::size_t Grid::index(const std::vector<int>& c) const {
  std::size_t p = 0;
  for (int a = 0; a < d; ++a) p = p * N + static_cast<std::size_t>(((c[a] % N) + N) % N);
  return p;
}

std::uint32_t Grid::step(std::size_t p, int axis, int offset) const {
  auto q = static_cast<std::uint32_t>(p);
  for (; offset > 0; --offset) q = plus[axis * size + q];
  for (; offset < 0; ++offset) q = minus[axis * size + q];
  return q;
}

namespace {

template <int D>
struct Point {
  using M = Eigen::Matrix<double, D, D>;
  using Vd = Eigen::Matrix<double, D, 1>;

  static void derivs(const Grid& g, const double* f, std::size_t p, Vd& grad, M& hess) {
    const std::size_t n = g.size;
    const double inv2h = 0.5 / g.h, invh2 = 1.0 / (g.h * g.h), inv4h2 = 0.25 * invh2;
    const double f0 = f[p];
    const std::uint32_t* t = g.diag.data();
    for (int a = 0; a < D; ++a) {
      const double fp = f[g.plus[a * n + p]], fm = f[g.minus[a * n + p]];
      grad[a] = (fp - fm) * inv2h;
      hess(a, a) = (fp - 2.0 * f0 + fm) * invh2;
      for (int b = 0; b < a; ++b, t += 4 * n) {
        const double v = (f[t[p]] - f[t[n + p]] - f[t[2 * n + p]] + f[t[3 * n + p]]) * inv4h2;
        hess(a, b) = v;
        hess(b, a) = v;
      }
    }
  }

  static M hhat(const Grid& g, const M& W, const double* f, std::size_t p) {
    Vd grad;
    M hess;
    derivs(g, f, p, grad, hess);
    M out = W * hess * W.transpose();
    const Vd gu = W * grad;
    for (int i = 0; i < D; ++i) {
      out(i, i) -= gu[i];
      for (int j = 0; j < i; ++j) out(j, i) = out(i, j);
    }
    return out;
  }

  static double lam_min(const M& K) {
    if constexpr (D == 1) {
      return K(0, 0);
    } else if constexpr (D == 2) {
      const double mean = 0.5 * (K(0, 0) + K(1, 1));
      const double half = 0.5 * (K(0, 0) - K(1, 1));
      return mean - std::sqrt(half * half + K(0, 1) * K(0, 1));
    } else {
      Eigen::SelfAdjointEigenSolver<M> es(K, Eigen::EigenvaluesOnly);
      return es.eigenvalues().minCoeff();
    }
  }

  static double log_det_one_plus(const M& A) {
    double c = A.trace();
    if constexpr (D >= 2) {
      for (int i = 0; i < D; ++i)
        for (int j = 0; j < i; ++j) c += A(i, i) * A(j, j) - A(i, j) * A(j, i);
    }
    if constexpr (D == 3) c += A.determinant();
    return std::log1p(c);
  }

  struct Ref {
    M K;
    M inv;
    double logdet;
    double invdet;
  };

  static Ref reference(const double* lf, double e) {
    Ref r;
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j) r.K(i, j) = e * lf[i * D + j] + (i == j ? 1.0 - e : 0.0);
    r.inv = r.K.inverse();
    r.invdet = 1.0 / r.K.determinant();
    r.logdet = std::log(r.K.determinant());
    return r;
  }

  static void rhs(const KernelInput& in, const KernelOutput& out, const M& W, const Ref& ref, std::size_t p) {
    const M Hh = hhat(*in.grid, W, in.psi, p);
    const double lam = lam_min(ref.K + Hh);
    if (!(lam > 0.0)) {
      out.logdet_ref[p] = std::numeric_limits<double>::quiet_NaN();
      out.logdet_rel[p] = std::numeric_limits<double>::quiet_NaN();
      out.lam_min[p] = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    out.logdet_ref[p] = ref.logdet;
    if constexpr (D == 2) {
      const double tr = ref.inv(0, 0) * Hh(0, 0) + 2.0 * ref.inv(0, 1) * Hh(0, 1) + ref.inv(1, 1) * Hh(1, 1);
      out.logdet_rel[p] = std::log1p(tr + (Hh(0, 0) * Hh(1, 1) - Hh(0, 1) * Hh(0, 1)) * ref.invdet);
    } else {
      out.logdet_rel[p] = log_det_one_plus(ref.inv * Hh);
    }
    out.lam_min[p] = lam;
  }
};

template <int D>
void rhs_loop(const KernelInput& in, const KernelOutput& out, bool parallel) {
  using P = Point<D>;
  const typename P::M W = in.grid->W;
  const double e = std::exp(-in.t);
  const auto n = static_cast<std::int64_t>(in.grid->size);
  const typename P::Ref uniform = P::reference(in.lf, e);
  auto body = [&](std::int64_t q) {
    const auto p = static_cast<std::size_t>(q);
    if (in.lf_uniform)
      P::rhs(in, out, W, uniform, p);
    else
      P::rhs(in, out, W, P::reference(in.lf + p * D * D, e), p);
  };
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < n; ++p) body(p);
  } else {
    for (std::int64_t p = 0; p < n; ++p) body(p);
  }
}

void rhs_dispatch(const KernelInput& in, const KernelOutput& out, bool parallel) {
  switch (in.grid->d) {
    case 1: rhs_loop<1>(in, out, parallel); break;
    case 2: rhs_loop<2>(in, out, parallel); break;
    case 3: rhs_loop<3>(in, out, parallel); break;
    default: throw Error(ErrorCode::ConfigError, "flow kernels support base dimension 1 to 3");
  }
}

template <int D>
void hessian_loop(const Grid& g, const double* f, double* out, bool parallel) {
  const typename Point<D>::M W = g.W;
  const auto n = static_cast<std::int64_t>(g.size);
  auto body = [&](std::int64_t p) {
    const auto H = Point<D>::hhat(g, W, f, static_cast<std::size_t>(p));
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j) out[p * D * D + i * D + j] = H(i, j);
  };
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < n; ++p) body(p);
  } else {
    for (std::int64_t p = 0; p < n; ++p) body(p);
  }
}

void hessian_dispatch(const Grid& g, const double* f, double* out, bool parallel) {
  switch (g.d) {
    case 1: hessian_loop<1>(g, f, out, parallel); break;
    case 2: hessian_loop<2>(g, f, out, parallel); break;
    case 3: hessian_loop<3>(g, f, out, parallel); break;
    default: throw Error(ErrorCode::ConfigError, "flow kernels support base dimension 1 to 3");
  }
}

}  // namespace

void ma_rhs_serial(const KernelInput& in, const KernelOutput& out) { rhs_dispatch(in, out, false); }
void ma_rhs_omp(const KernelInput& in, const KernelOutput& out) { rhs_dispatch(in, out, true); }

void hessian_field_serial(const Grid& grid, const double* f, double* out) { hessian_dispatch(grid, f, out, false); }
void hessian_field_omp(const Grid& grid, const double* f, double* out) { hessian_dispatch(grid, f, out, true); }

Eigen::MatrixXd hessian_at(const Grid& g, const double* f, std::size_t p) {
  const int d = g.d;
  Eigen::VectorXd grad(d);
  Eigen::MatrixXd hess(d, d);
  const double f0 = f[p];
  for (int a = 0; a < d; ++a) {
    const double fp = f[g.step(p, a, 1)], fm = f[g.step(p, a, -1)];
    grad[a] = (fp - fm) / (2.0 * g.h);
    hess(a, a) = (fp - 2.0 * f0 + fm) / (g.h * g.h);
    for (int b = 0; b < a; ++b) {
      const double v = (f[g.step(g.step(p, a, 1), b, 1)] - f[g.step(g.step(p, a, 1), b, -1)] -
                        f[g.step(g.step(p, a, -1), b, 1)] + f[g.step(g.step(p, a, -1), b, -1)]) /
                       (4.0 * g.h * g.h);
      hess(a, b) = v;
      hess(b, a) = v;
    }
  }
  Eigen::MatrixXd out = g.W * hess * g.W.transpose();
  const Eigen::VectorXd gu = g.W * grad;
  for (int i = 0; i < d; ++i) {
    out(i, i) -= gu[i];
    for (int j = 0; j < i; ++j) out(j, i) = out(i, j);
  }
  return out;
}

double log_det_one_plus(const Eigen::MatrixXd& A) {
  switch (A.rows()) {
    case 1: return Point<1>::log_det_one_plus(A);
    case 2: return Point<2>::log_det_one_plus(A);
    case 3: return Point<3>::log_det_one_plus(A);
    default: return std::log((Eigen::MatrixXd::Identity(A.rows(), A.cols()) + A).determinant());
  }
}

Eigen::VectorXd gradient_at(const Grid& g, const double* f, std::size_t p) {
  Eigen::VectorXd grad(g.d);
  for (int a = 0; a < g.d; ++a) grad[a] = (f[g.step(p, a, 1)] - f[g.step(p, a, -1)]) / (2.0 * g.h);
  return g.W * grad;
}

}  // namespace otcrf
