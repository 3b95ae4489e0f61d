#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "otcrf/error.hpp"
#include "otcrf/geom.hpp"

using namespace otcrf;

namespace {

Vec random_point(std::mt19937_64& rng, int s) {
  std::uniform_real_distribution<double> U(-1.5, 1.5);
  Vec y(s);
  for (int i = 0; i < s; ++i) y[i] = std::exp(U(rng));
  return y;
}

double max_abs(const CMat& a) { return a.cwiseAbs().maxCoeff(); }

// f(u) = 0.3 sin(u1) + 0.2 cos(2 u2) + 0.1 u1 u2 with analytic u-derivatives
double test_f(const Vec& y) {
  const double u1 = std::log(y[0]), u2 = std::log(y[1]);
  return 0.3 * std::sin(u1) + 0.2 * std::cos(2 * u2) + 0.1 * u1 * u2;
}

CMat test_f_ddbar(const Vec& y, int m) {
  const double u1 = std::log(y[0]), u2 = std::log(y[1]);
  const double f1 = 0.3 * std::cos(u1) + 0.1 * u2;
  const double f2 = -0.4 * std::sin(2 * u2) + 0.1 * u1;
  const double f11 = -0.3 * std::sin(u1);
  const double f22 = -0.8 * std::cos(2 * u2);
  const double f12 = 0.1;
  CMat out = CMat::Zero(m, m);
  out(0, 0) = 0.25 / (y[0] * y[0]) * (f11 - f1);
  out(1, 1) = 0.25 / (y[1] * y[1]) * (f22 - f2);
  out(0, 1) = out(1, 0) = 0.25 / (y[0] * y[1]) * f12;
  return out;
}

}  // namespace

TEST_CASE("closed forms") {
  Vec y(2);
  y << 1, 1;
  CMat a = eval_form(FormKind::Alpha, y);
  CHECK(a(0, 0).real() == 0.25);
  CHECK(a(1, 1).real() == 0.25);
  CHECK(a(2, 2).real() == 0.0);
  y << 2, 3;
  CMat b = eval_form(FormKind::Beta, y);
  CHECK(b(2, 2).real() == 6.0);
  CHECK(max_abs(b) == 6.0);
  y << 1, 1;
  CMat w = eval_form(FormKind::OmegaOT, y);
  CHECK(w(0, 0).real() == 0.5);
  CHECK(w(0, 1).real() == 0.25);
  CHECK(w(1, 1).real() == 0.5);
  CHECK(w(2, 2).real() == 1.0);
  CHECK(w(0, 2) == Complex(0.0));
  CHECK(is_positive(w));
  CHECK_FALSE(is_positive(a));
}

TEST_CASE("positivity check") {
  CMat g(2, 2);
  g << 1.0, Complex(0.0, 0.5), Complex(0.0, -0.5), 1.0;
  CHECK(is_positive(g));
  g(0, 1) = Complex(0.0, 1.0);
  g(1, 0) = Complex(0.0, -1.0);
  CHECK_FALSE(is_positive(g));  // semidefinite
  g(1, 0) = Complex(0.0, 0.5);
  CHECK_FALSE(is_positive(g));  // not Hermitian
  CHECK_THROWS_AS(require_positive(g), Error);
}

TEST_CASE("Chern-Ricci of omega_OT is -alpha") {
  std::mt19937_64 rng(11);
  for (int m : {2, 3, 4}) {
    auto w = form_field(FormKind::OmegaOT, m);
    for (int k = 0; k < 25; ++k) {
      Vec y = random_point(rng, m - 1);
      CMat r = chern_ricci(w, y);
      CHECK(max_abs(r + eval_form(FormKind::Alpha, y)) < 1e-6);
      CHECK(max_abs(r - r.adjoint()) < 1e-12);
    }
  }
}

TEST_CASE("Chern-Ricci of constant and conformal fields") {
  CMat g0 = CMat::Identity(3, 3);
  g0(0, 1) = Complex(0.2, 0.1);
  g0(1, 0) = std::conj(g0(0, 1));
  auto flat = constant_field(g0, 2);
  Vec y(2);
  y << 0.7, 1.9;
  CHECK(max_abs(chern_ricci(flat, y)) < 1e-9);
  CHECK(std::abs(chern_scalar(flat, y)) < 1e-9);

  auto cf = conformal(test_f, flat);
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    Vec p = random_point(rng, 2);
    CHECK(max_abs(chern_ricci(cf, p) + 3.0 * test_f_ddbar(p, 3)) < 1e-6);
  }
}

TEST_CASE("conformal change law on omega_OT") {
  auto w = form_field(FormKind::OmegaOT, 3);
  auto cw = conformal(test_f, w);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 20; ++k) {
    Vec y = random_point(rng, 2);
    CMat lhs = chern_ricci(cw, y) - chern_ricci(w, y) + 3.0 * complex_hessian(test_f, y, 3);
    CHECK(max_abs(lhs) < 1e-5);
  }
}

TEST_CASE("fourth-order convergence of the Ricci stencil") {
  auto w = form_field(FormKind::OmegaOT, 3);
  auto cw = conformal(test_f, w);
  Vec y(2);
  y << 1.3, 0.7;
  auto residual = [&](double h) {
    CMat exact = -eval_form(FormKind::Alpha, y) - 3.0 * test_f_ddbar(y, 3);
    return max_abs(chern_ricci(cw, y, h) - exact);
  };
  const double r1 = residual(0.2), r2 = residual(0.1);
  CHECK(r1 > 0.0);
  CHECK(r1 / r2 >= 8.0);
}

TEST_CASE("d dbar log Omega = alpha") {
  std::mt19937_64 rng(9);
  for (int k = 0; k < 20; ++k) {
    Vec y = random_point(rng, 2);
    ScalarFn logO = [](const Vec& p) { return std::log(volume_density(p, 1.0)); };
    CHECK(max_abs(complex_hessian(logO, y, 3) - eval_form(FormKind::Alpha, y)) < 1e-6);
  }
}

TEST_CASE("Chern scalar of omega_OT") {
  std::mt19937_64 rng(13);
  for (int m : {2, 3, 4}) {
    auto w = form_field(FormKind::OmegaOT, m);
    // oracle: -tr((I+J)^{-1}) from the eigenvalues m, 1, ..., 1
    const double expected = -((m - 2) + 1.0 / m);
    CHECK(expected == doctest::Approx(-double((m - 1) * (m - 1)) / m));
    for (int k = 0; k < 10; ++k) CHECK(std::abs(chern_scalar(w, random_point(rng, m - 1)) - expected) < 1e-6);
  }
}

TEST_CASE("torsion") {
  Vec y(2);
  y << 1.0, 1.0;
  Tensor ta = torsion(form_field(FormKind::Alpha, 3), y);
  for (auto c : ta.data) CHECK(std::abs(c) < 1e-8);
  Tensor tb = torsion(form_field(FormKind::Beta, 3), y);
  CHECK(std::abs(tb.at({0, 2, 2}) - Complex(0.0, -0.5)) < 1e-10);
  CHECK(std::abs(tb.at({2, 0, 2}) - Complex(0.0, 0.5)) < 1e-10);
  y << 0.4, 2.2;
  Tensor tw = torsion(form_field(FormKind::OmegaOT, 3), y);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int l = 0; l < 3; ++l) CHECK(tw.at({i, j, l}) + tw.at({j, i, l}) == Complex(0.0));
}

TEST_CASE("curvature") {
  Vec y(2);
  y << 0.8, 1.7;
  Tensor flat = curvature(constant_field(CMat::Identity(3, 3), 2), y);
  for (auto c : flat.data) CHECK(std::abs(c) < 1e-10);

  MetricField half_plane(1, 1, "alpha1", [](const Vec& p) {
    CMat g(1, 1);
    g(0, 0) = 1.0 / (4.0 * p[0] * p[0]);
    return g;
  }, true);
  Vec one(1);
  one << 1.0;
  CHECK(curvature(half_plane, one).at({0, 0, 0, 0}).real() == doctest::Approx(-0.125).epsilon(1e-9));

  auto w = form_field(FormKind::OmegaOT, 3);
  std::mt19937_64 rng(17);
  for (int k = 0; k < 10; ++k) {
    Vec p = random_point(rng, 2);
    Tensor R = curvature(w, p);
    CHECK(std::abs(curvature_trace(R, w(p)) - chern_scalar(w, p)) < 1e-5);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) CHECK(std::abs(R.at({i, j, a, b}) - std::conj(R.at({j, i, b, a}))) < 1e-7);
  }
}

TEST_CASE("tensor norms") {
  Tensor z(3, {Slot::Lower, Slot::Lower, Slot::LowerBar});
  CHECK(tensor_norm(z, CMat::Identity(3, 3)) == 0.0);
  z.at({1, 2, 0}) = Complex(3.0, -4.0);
  CHECK(tensor_norm(z, CMat::Identity(3, 3)) == doctest::Approx(5.0));

  Vec y(2);
  y << 1.0, 1.0;
  auto w = form_field(FormKind::OmegaOT, 3);
  const CMat g = w(y);
  const CMat H = g.inverse();
  Tensor T = torsion(w, y);
  // brute force over all six indices
  Complex acc = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int l = 0; l < 3; ++l)
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c) acc += T.at({i, j, l}) * std::conj(T.at({a, b, c})) * H(a, i) * H(b, j) * H(l, c);
  CHECK(tensor_norm(T, g) == doctest::Approx(std::sqrt(acc.real())).epsilon(1e-12));
  CHECK(std::abs(acc.imag()) < 1e-12);

  // upper slot weighting
  Tensor v(2, {Slot::Upper});
  v.at({0}) = 1.0;
  CMat g2(2, 2);
  g2 << 4.0, 0.0, 0.0, 1.0;
  CHECK(tensor_norm(v, g2) == doctest::Approx(2.0));
}

TEST_CASE("wedge ratio and flattening") {
  std::mt19937_64 rng(19);
  auto beta = form_field(FormKind::Beta, 3);
  auto w = form_field(FormKind::OmegaOT, 3);
  auto two_beta = linear_combination(2.0, beta, 0.0, beta);
  auto alpha = form_field(FormKind::Alpha, 3);
  auto gamma = form_field(FormKind::Gamma, 3);
  auto a3bg = linear_combination(1.0, linear_combination(1.0, alpha, 3.0, beta), 1.0, gamma);
  auto ew = conformal(test_f, w);
  auto fw = conformal_flatten(w);
  auto fa = conformal_flatten(a3bg);
  auto fe = conformal_flatten(ew);
  for (int k = 0; k < 20; ++k) {
    Vec y = random_point(rng, 2);
    CHECK(wedge_ratio(beta, y) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(wedge_ratio(two_beta, y) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(wedge_ratio(w, y) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(fw.sigma(y)) < 1e-10);
    CHECK(std::abs(fa.sigma(y) + std::log(3.0)) < 1e-10);
    CHECK(std::abs(fe.sigma(y) + test_f(y)) < 1e-10);
    CHECK(wedge_ratio(fe.flattened, y) == 1.0);
    CHECK(std::abs(conformal_flatten(fe.flattened).sigma(y)) < 1e-14);
  }
}

TEST_CASE("reference metric") {
  auto w = form_field(FormKind::OmegaOT, 3);
  auto alpha = form_field(FormKind::Alpha, 3);
  Vec y(2);
  y << 0.6, 1.4;
  CHECK(reference_metric(0.0, w)(y) == w(y));
  const CMat g20 = reference_metric(20.0, w)(y);
  CHECK(max_abs((g20 - alpha(y)).topLeftCorner(2, 2)) <= std::exp(-20.0) * max_abs(w(y)) + 1e-16);
  y << 1.0, 1.0;
  CHECK(reference_metric(1.0, w)(y)(2, 2).real() == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  auto not_flat = linear_combination(1.0, w, 1.0, form_field(FormKind::Beta, 3));
  CHECK_THROWS_AS(reference_metric(1.0, not_flat), Error);
  CHECK_NOTHROW(reference_metric(1.0, not_flat, 2.0));
}

TEST_CASE("invariant and grid-sampled fields") {
  Mat V(2, 2);
  V << 1.0, 0.3, -0.2, 0.8;
  auto ot_norm = [](const Vec&) {
    CMat M = CMat::Zero(3, 3);
    M.topLeftCorner(2, 2) = CMat::Ones(2, 2) + CMat::Identity(2, 2);
    M(2, 2) = 1.0;
    return M;
  };
  auto inv = invariant_field(V, ot_norm, "ot", true);
  auto w = form_field(FormKind::OmegaOT, 3);
  std::mt19937_64 rng(23);
  for (int k = 0; k < 5; ++k) {
    Vec y = random_point(rng, 2);
    CHECK(max_abs(inv(y) - w(y)) < 1e-14 * max_abs(w(y)));
  }

  auto banded = [](const Vec& xi) {
    CMat M = CMat::Identity(3, 3);
    M(0, 0) += 0.2 * std::cos(2 * M_PI * xi[0]) + 0.1 * std::sin(2 * M_PI * (xi[0] + 2 * xi[1]));
    M(1, 2) = Complex(0.05 * std::cos(4 * M_PI * xi[1]), 0.03);
    M(2, 1) = std::conj(M(1, 2));
    return M;
  };
  const int N = 8;
  std::vector<CMat> samples;
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) {
      Vec xi(2);
      xi << double(a) / N, double(b) / N;
      samples.push_back(banded(xi));
    }
  auto grid = grid_sampled(V, N, samples);
  auto exact = invariant_field(V, banded, "banded", false);
  for (int k = 0; k < 5; ++k) {
    Vec y = random_point(rng, 2);
    CHECK(max_abs(grid(y) - exact(y)) < 1e-12 * max_abs(exact(y)));
  }
}

TEST_CASE("tensor dump") {
  Tensor t(2, {Slot::Lower, Slot::LowerBar});
  t.at({1, 0}) = Complex(0.5, -2.0);
  std::ostringstream out;
  dump_tensor(out, t);
  CHECK(out.str() == "0 0 0 0\n0 1 0 0\n1 0 0.5 -2\n1 1 0 0\n");
}
