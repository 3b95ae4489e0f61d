#include <doctest.h>

#include <cmath>
#include <sstream>

#include "otcrf/error.hpp"
#include "otcrf/flow.hpp"

using namespace otcrf;

namespace {

const OTStructure& ot3() {
  static const OTStructure ot = build_ot_structure(PolynomialSpec{{-1, 0, 0, -1, 1}}, {{{2, 0, 2, 1}}, {{1, 0, 1, -1}}});
  return ot;
}

const OTStructure& ot2() {
  static const OTStructure ot = build_ot_structure(PolynomialSpec{{-1, -1, 0, 1}}, {{{0, 1, 0}}});
  return ot;
}

FlowConfig small_config(int N, double amp = 0.0) {
  FlowConfig cfg;
  cfg.N = N;
  if (amp != 0.0) cfg.rho = {{amp, {1, 0}}};
  return cfg;
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

// Analytic Hhat of f = amp cos(2 pi k.xi) at xi.
Mat analytic_hhat(const Grid& g, double amp, const Vec& k, const Vec& xi) {
  const double ph = 2.0 * M_PI * k.dot(xi);
  const Vec grad = -amp * 2.0 * M_PI * std::sin(ph) * k;
  const Mat hess = -amp * 4.0 * M_PI * M_PI * std::cos(ph) * k * k.transpose();
  Mat out = g.W * hess * g.W.transpose();
  const Vec gu = g.W * grad;
  for (int i = 0; i < g.d; ++i) out(i, i) -= gu[i];
  return out;
}

}  // namespace

TEST_CASE("init_state with zero potential reproduces omega_LF") {
  FlowModel model(ot3(), small_config(16));
  const FlowState st = init_state(model);
  CHECK(st.mean == 0.0);
  for (double v : st.psi) CHECK(v == 0.0);
  CHECK(max_abs_diff(model.k0(), model.lf_block()) == 0.0);
}

TEST_CASE("init_state accepts a small cosine and rejects a large one") {
  FlowModel model(ot3(), small_config(64, 0.05));
  const FlowState st = init_state(model);
  const int d = model.d();
  for (std::size_t p = 0; p < model.grid().size; ++p) {
    Mat K(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) K(i, j) = model.k0()[p * d * d + i * d + j];
    CHECK(Eigen::SelfAdjointEigenSolver<Mat>(K).eigenvalues().minCoeff() > 0.0);
  }
  const auto phi = st.phi();
  for (std::size_t p = 0; p < phi.size(); ++p) CHECK(phi[p] == doctest::Approx(model.rho()[p]).epsilon(1e-14));
  FlowModel bad(ot3(), small_config(64, 10.0));
  CHECK(code_of([&] { init_state(bad); }) == ErrorCode::InitialMetricNotPositive);
}

TEST_CASE("reduced_hessian matches the chain rule to second order") {
  double err[2];
  for (int r = 0; r < 2; ++r) {
    const int N = r == 0 ? 32 : 64;
    FlowModel model(ot3(), small_config(N));
    const Grid& g = model.grid();
    std::vector<double> phi(g.size);
    for (std::size_t p = 0; p < g.size; ++p) phi[p] = std::cos(2.0 * M_PI * g.xi(p)[0]);
    double e = 0.0, scale = 0.0;
    for (std::size_t p = 0; p < g.size; ++p) {
      const Mat H = reduced_hessian(model, phi, p);
      CHECK(H(0, 1) == H(1, 0));
      const Vec xi = g.xi(p);
      const Vec u = g.V.transpose() * xi;
      Mat Hn = H;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) Hn(i, j) *= std::exp(u[i] + u[j]);
      const Mat ref = analytic_hhat(g, 1.0, Vec::Unit(2, 0), xi);
      e = std::max(e, (Hn - ref).cwiseAbs().maxCoeff());
      scale = std::max(scale, ref.cwiseAbs().maxCoeff());
    }
    e /= scale;
    err[r] = e;
  }
  CHECK(err[1] < 2e-3);
  CHECK(err[0] / err[1] == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("ma_rhs at t = 0 equals log m for omega_OT") {
  for (const OTStructure* ot : {&ot2(), &ot3()}) {
    const int m = ot->m;
    FlowConfig cfg = small_config(16);
    FlowModel model(*ot, cfg);
    std::vector<double> psi(model.grid().size, 0.0), dpsi;
    double lam = 0.0, mean_rate = 0.0;
    REQUIRE(model.rhs(psi, 0.0, 0.0, dpsi, lam, mean_rate));
    CHECK(mean_rate == doctest::Approx(std::log(m)).epsilon(1e-14));
    for (double v : dpsi) CHECK(std::abs(v) < 1e-15);
    CHECK(lam == doctest::Approx(m == 2 ? 2.0 : 1.0).epsilon(1e-14));

    REQUIRE(model.rhs(psi, 0.0, 40.0, dpsi, lam, mean_rate));
    CHECK(std::abs(mean_rate) < 1e-15);
  }
}

TEST_CASE("serial and OpenMP kernels agree bit for bit") {
  FlowModel model(ot3(), small_config(32, 0.05));
  const FlowState st = init_state(model);
  const Grid& g = model.grid();
  const std::size_t n = g.size;
  std::vector<double> r1(n), l1(n), m1(n), r2(n), l2(n), m2(n);
  for (double t : {0.0, 0.7}) {
    KernelInput in{&g, st.psi.data(), model.lf_block().data(), true, t};
    ma_rhs_serial(in, KernelOutput{r1.data(), l1.data(), m1.data()});
    ma_rhs_omp(in, KernelOutput{r2.data(), l2.data(), m2.data()});
    CHECK(r1 == r2);
    CHECK(l1 == l2);
    CHECK(m1 == m2);
  }
  std::vector<double> h1(n * 4), h2(n * 4);
  hessian_field_serial(g, st.psi.data(), h1.data());
  hessian_field_omp(g, st.psi.data(), h2.data());
  CHECK(h1 == h2);

  FlowConfig serial = small_config(32, 0.05);
  serial.parallel = false;
  FlowConfig par = serial;
  par.parallel = true;
  serial.t_end = par.t_end = 0.02;
  serial.stride = par.stride = 0.01;
  const TimeSeries a = run(ot3(), serial), b = run(ot3(), par);
  CHECK(a.final_state.psi == b.final_state.psi);
  CHECK(a.final_state.mean == b.final_state.mean);
  for (std::size_t k = 0; k < a.records.size(); ++k) CHECK(a.records[k].values() == b.records[k].values());
}

TEST_CASE("one Euler step from zero moves phi by dt log m") {
  FlowModel model(ot3(), small_config(16));
  FlowState st = init_state(model);
  const double dt = adaptive_dt(model, st);
  const double h = model.grid().h;
  CHECK(dt == doctest::Approx(0.2 * h * h / model.operator_scale()).epsilon(1e-14));
  step(model, st, 1.0);
  CHECK(st.t == dt);
  CHECK(st.mean == doctest::Approx(dt * std::log(3.0)).epsilon(1e-14));
  for (double v : st.psi) CHECK(v == 0.0);
  CHECK(st.rhs_evals == 2);
  // Exact solution of phi' = log(1 + 2 e^{-t}) - phi over one step.
  const double exact = std::log(3.0) * dt + 0.5 * dt * dt * (-2.0 / 3.0 - std::log(3.0));
  CHECK(std::abs(st.mean - exact) < 0.6 * dt * dt * 2.0);
}

TEST_CASE("time stepping orders: Euler first, RK2 second") {
  for (Scheme scheme : {Scheme::Euler, Scheme::RK2}) {
    std::vector<std::vector<double>> sol;
    for (double dt : {4e-4, 2e-4, 1e-4}) {
      FlowConfig cfg = small_config(16, 0.05);
      cfg.scheme = scheme;
      cfg.fixed_dt = dt;
      cfg.t_end = 0.2;
      cfg.stride = 0.2;
      sol.push_back(run(ot3(), cfg).final_state.phi());
    }
    const double order = std::log2(max_abs_diff(sol[0], sol[1]) / max_abs_diff(sol[1], sol[2]));
    if (scheme == Scheme::Euler)
      CHECK(order == doctest::Approx(1.0).epsilon(0.1));
    else
      CHECK(order == doctest::Approx(2.0).epsilon(0.1));
  }
}

TEST_CASE("observables for zero and constant potentials") {
  FlowModel model(ot3(), small_config(16));
  FlowState st = init_state(model);
  st.t = 0.8;
  const ObservableRecord r = observables(model, st);
  CHECK(r.max_tr_ref_omega == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(r.max_tr_omega_ref == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(r.c0_distance == 0.0);
  CHECK(r.calabi == 0.0);
  CHECK(r.sup_phi == 0.0);
  CHECK(r.leaf_scale == doctest::Approx(std::exp(-0.4)).epsilon(1e-15));
  st.mean = 0.3;
  const ObservableRecord q = observables(model, st);
  CHECK(q.sup_phi == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(q.c0_distance == 0.0);
  CHECK(q.calabi == 0.0);
  CHECK(q.max_tr_ref_omega == r.max_tr_ref_omega);
  CHECK(q.r_min == r.r_min);

  const Mat G = model.normalised_metric(st.phi(), 5, 0.8);
  CHECK(G(2, 2) == model.c() * std::exp(-0.8));
  CHECK(G(0, 2) == 0.0);
}

TEST_CASE("volume deviation at t = 0 is m - 1 and decays like e^{-t}") {
  FlowModel model(ot3(), small_config(8));
  FlowState st = init_state(model);
  CHECK(observables(model, st).volume_dev == doctest::Approx(2.0).epsilon(1e-14));
  for (double t : {1.0, 3.0, 6.0}) {
    st.t = t;
    CHECK(observables(model, st).volume_dev <= 2.0 * std::exp(-t) + 1e-15);
  }
}

TEST_CASE("Calabi quantity agrees with the Christoffel difference of geom") {
  const double amp = 0.01, t = 0.3;
  const Vec k = Vec::Unit(2, 0);
  double err[2];
  for (int r = 0; r < 2; ++r) {
    const int N = r == 0 ? 32 : 64;
    FlowModel model(ot3(), small_config(N));
    const Grid& g = model.grid();
    FlowState st = init_state(model);
    st.t = t;
    for (std::size_t p = 0; p < g.size; ++p) st.psi[p] = amp * std::cos(2.0 * M_PI * g.xi(p)[0]);
    const double flow_S = observables(model, st).calabi;

    const double e = std::exp(-t);
    const Mat Mt = e * (Mat::Ones(2, 2) + Mat::Identity(2, 2)) + (1.0 - e) * Mat::Identity(2, 2);
    auto block = [&](const Mat& B) {
      CMat M = CMat::Zero(3, 3);
      M.topLeftCorner(2, 2) = B.cast<Complex>();
      M(2, 2) = model.c() * e;
      return M;
    };
    const MetricField gf = invariant_field(
        g.V, [&](const Vec& xi) { return block(Mt + analytic_hhat(g, amp, k, xi)); }, "test", true);
    const MetricField rf = invariant_field(g.V, [&](const Vec&) { return block(Mt); }, "test-ref", true);
    double geom_S = 0.0;
    for (int j = 0; j < N; ++j) {
      Vec xi(2);
      xi << static_cast<double>(j) / N, 0.0;
      const Vec y = (g.V.transpose() * xi).array().exp();
      const double s = christoffel_difference_norm(gf, rf, y);
      geom_S = std::max(geom_S, s * s);
    }
    REQUIRE(geom_S > 0.0);
    err[r] = std::abs(flow_S - geom_S) / geom_S;
  }
  CHECK(err[1] < 1e-2);
  CHECK(err[0] / err[1] > 3.0);
}

TEST_CASE("zero potential: derived fields vanish and phi + phidot decays monotonically") {
  FlowConfig cfg = small_config(8);
  cfg.t_end = 12.0;
  const TimeSeries ts = run(ot3(), cfg);
  REQUIRE(ts.records.size() == 25);
  for (const auto& r : ts.records) {
    CHECK(r.c0_distance == 0.0);
    CHECK(r.calabi == 0.0);
    if (r.t >= 2.0) {
      const auto& prev = ts.records[static_cast<std::size_t>(std::lround(r.t / cfg.stride)) - 1];
      CHECK(r.sup_phi_plus_phidot < prev.sup_phi_plus_phidot);
    }
  }
}

TEST_CASE("runs are deterministic and t_end = 0 gives one record") {
  FlowConfig cfg = small_config(16, 0.05);
  cfg.t_end = 0.0;
  CHECK(run(ot3(), cfg).records.size() == 1);
  cfg.t_end = 0.05;
  cfg.stride = 0.02;
  const TimeSeries a = run(ot3(), cfg), b = run(ot3(), cfg);
  REQUIRE(a.records.size() == 4);
  CHECK(a.records.back().t == 0.05);
  std::ostringstream sa, sb;
  write_csv(sa, a.records);
  write_csv(sb, b.records);
  CHECK(sa.str() == sb.str());
}

TEST_CASE("CSV and state dumps round trip") {
  FlowConfig cfg = small_config(8, 0.05);
  cfg.t_end = 0.1;
  cfg.stride = 0.05;
  const TimeSeries ts = run(ot3(), cfg);
  std::ostringstream out;
  write_csv(out, ts.records);
  CHECK(out.str().rfind("# schema=otcrf-timeseries/1\nt[flow_time],sup_phi[1],", 0) == 0);
  std::istringstream in(out.str());
  const auto back = read_csv(in);
  REQUIRE(back.size() == ts.records.size());
  for (std::size_t k = 0; k < back.size(); ++k) CHECK(back[k].values() == ts.records[k].values());

  std::istringstream other("# schema=otcrf-timeseries/0\nt\n0\n");
  CHECK(code_of([&] { read_csv(other); }) == ErrorCode::SchemaMismatch);
  std::istringstream broken(out.str() + "1,2,x\n");
  CHECK(code_of([&] { read_csv(broken); }) == ErrorCode::ParseError);

  std::ostringstream sdump;
  write_state(sdump, ts.final_state, 8, 2);
  std::istringstream sin(sdump.str());
  const FlowState st = read_state(sin, 8, 2);
  CHECK(st.psi == ts.final_state.psi);
  CHECK(st.mean == ts.final_state.mean);
  CHECK(st.t == ts.final_state.t);
  std::istringstream sin2(sdump.str());
  CHECK(code_of([&] { read_state(sin2, 16, 2); }) == ErrorCode::ConfigError);
}

TEST_CASE("configuration errors are raised before any computation") {
  CHECK(code_of([] { parse_scheme("rk4"); }) == ErrorCode::ConfigError);
  CHECK(parse_scheme("rk2") == Scheme::RK2);
  FlowConfig cfg;
  cfg.cfl = 1.5;
  CHECK(code_of([&] { validate_config(cfg); }) == ErrorCode::ConfigError);
  cfg = FlowConfig{};
  cfg.reference.kind = "other";
  CHECK(code_of([&] { FlowModel(ot3(), cfg); }) == ErrorCode::ConfigError);
}
