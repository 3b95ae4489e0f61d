#include <doctest.h>

#include <cmath>
#include <sstream>

#include "otcrf/analysis.hpp"
#include "otcrf/error.hpp"

using namespace otcrf;

namespace {

const OTStructure& ot3() {
  static const OTStructure ot = build_ot_structure(PolynomialSpec{{-1, 0, 0, -1, 1}}, {{{2, 0, 2, 1}}, {{1, 0, 1, -1}}});
  return ot;
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

std::vector<double> grid_times(double t_end, double stride) {
  std::vector<double> t;
  for (int k = 0; k * stride <= t_end + 1e-12; ++k) t.push_back(k * stride);
  return t;
}

std::vector<ObservableRecord> synthetic_passing() {
  std::vector<ObservableRecord> recs;
  for (double t : grid_times(12.0, 0.5)) {
    ObservableRecord r;
    r.t = t;
    r.sup_phi = 0.1 * std::exp(-t);
    r.sup_phidot = 0.1 * std::exp(-t);
    r.sup_phi_plus_phidot = 0.1 * std::exp(-0.5 * t);
    r.max_tr_ref_omega = 3.0 + 0.1 * std::exp(-t);
    r.max_tr_omega_ref = 3.0 + 0.1 * std::exp(-t);
    r.c0_distance = 0.01 * std::exp(-0.3 * t);
    r.r_min = -2.0 - 0.5 * std::exp(-t);
    r.r_max = -2.0;
    r.calabi = 0.2 * std::exp(-2.0 * t);
    r.leaf_scale = std::exp(-0.5 * t);
    r.volume_dev = 2.0 * std::exp(-t);
    r.c1_norm = 1.0 + std::exp(-t);
    recs.push_back(r);
  }
  return recs;
}

FlowConfig small_config(int N) {
  FlowConfig cfg;
  cfg.N = N;
  return cfg;
}

}  // namespace

TEST_CASE("fit_decay recovers exact exponentials") {
  const auto t = grid_times(12.0, 0.5);
  for (double lambda : {0.1, 0.5, 1.0}) {
    std::vector<double> v;
    for (double s : t) v.push_back(3.0 * std::exp(-lambda * s));
    const DecayFit f = fit_decay(t, v, 4.0, 12.0);
    CHECK(std::abs(f.rate - lambda) < 1e-10);
    CHECK(f.C == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(f.residual < 1e-12);
    CHECK(f.samples == 17);
    CHECK(f.t0 == 4.0);
    CHECK(f.t1 == 12.0);
  }
}

TEST_CASE("fit_decay on (1+t)e^{-t} and on constants") {
  const auto t = grid_times(12.0, 0.5);
  std::vector<double> v, c;
  for (double s : t) {
    v.push_back((1.0 + s) * std::exp(-s));
    c.push_back(0.7);
  }
  const DecayFit f = fit_decay(t, v, 4.0, 12.0);
  CHECK(f.rate > 0.85);
  CHECK(f.rate < 1.0);
  CHECK(std::abs(fit_decay(t, c, 4.0, 12.0).rate) < 1e-14);
}

TEST_CASE("fit_decay errors") {
  const std::vector<double> t{0.0, 1.0, 2.0, 3.0};
  const std::vector<double> v{1.0, 0.5, 0.0, 0.1};
  CHECK(code_of([&] { fit_decay(t, v, 0.0, 3.0); }) == ErrorCode::NonPositiveSeries);
  CHECK(code_of([&] { fit_decay(t, v, 0.0, 1.0); }) == ErrorCode::EmptyWindow);
  CHECK(code_of([&] { fit_decay(t, v, 5.0, 9.0); }) == ErrorCode::EmptyWindow);
  CHECK(fit_decay(t, {1.0, 0.5, 0.25, 0.0}, 0.0, 2.0).rate == doctest::Approx(std::log(2.0)));
}

TEST_CASE("verify_bounds passes a synthetic series within every estimate") {
  const BoundReport rep = verify_bounds(synthetic_passing());
  REQUIRE(rep.entries.size() == 11);
  for (const auto& e : rep.entries) {
    INFO(e.name);
    CHECK(e.pass);
    CHECK(e.margin >= 0.0);
  }
  CHECK(rep.all_pass());
  CHECK(rep.at("c0_decay").measured == doctest::Approx(0.3));
  CHECK(rep.at("scalar_upper_growth").measured == 0.0);
  CHECK(code_of([&] { rep.at("nope"); }) == ErrorCode::UnknownSeries);
}

TEST_CASE("verify_bounds reports a violated phi decay with its margin") {
  auto recs = synthetic_passing();
  for (auto& r : recs) r.sup_phi = 0.1 * std::exp(-0.5 * r.t);
  const BoundReport rep = verify_bounds(recs);
  const BoundEntry& e = rep.at("phi_decay");
  CHECK_FALSE(e.pass);
  CHECK(e.measured == doctest::Approx(0.5));
  CHECK(e.margin == doctest::Approx(-0.4));
  CHECK_FALSE(rep.all_pass());
  int failing = 0;
  for (const auto& x : rep.entries) failing += x.pass ? 0 : 1;
  CHECK(failing == 1);
}

TEST_CASE("verify_bounds bounded and growth entries") {
  auto recs = synthetic_passing();
  recs[10].max_tr_ref_omega = 20.0;
  recs[3].r_min = -13.0;
  recs[0].calabi = 1e-30;
  for (auto& r : recs) r.r_max = std::exp(0.7 * r.t);
  const BoundReport rep = verify_bounds(recs);
  CHECK_FALSE(rep.at("tr_ref_omega_bounded").pass);
  CHECK(rep.at("tr_ref_omega_bounded").threshold == doctest::Approx(5.0 * recs[0].max_tr_ref_omega));
  CHECK_FALSE(rep.at("scalar_lower").pass);
  CHECK(rep.at("scalar_lower").threshold == doctest::Approx(-12.5));
  CHECK(rep.at("calabi_bounded").pass);
  CHECK(rep.at("scalar_upper_growth").measured == doctest::Approx(0.7));
  CHECK_FALSE(rep.at("scalar_upper_growth").pass);
}

TEST_CASE("decay verdicts are monotone when the smaller series carries a nonincreasing factor") {
  const auto recs = synthetic_passing();
  const std::vector<double (*)(double)> factors{
      [](double t) { return std::exp(-0.2 * t); },
      [](double t) { return 1.0 / (1.0 + t * t); },
      [](double t) { return t < 6.0 ? 1.0 : 0.3; },
      [](double) { return 0.5; },
  };
  for (auto g : factors) {
    auto dom = recs;
    for (auto& r : dom) {
      r.sup_phi *= g(r.t);
      r.sup_phi_plus_phidot *= g(r.t);
      r.c0_distance *= g(r.t);
      r.volume_dev *= g(r.t);
    }
    const BoundReport a = verify_bounds(dom), b = verify_bounds(recs);
    for (const char* name : {"phi_decay", "phi_plus_phidot_decay", "c0_decay", "volume_decay"}) {
      INFO(name);
      CHECK(a.at(name).pass);
      CHECK(a.at(name).measured >= b.at(name).measured - 1e-12);
    }
  }
}

TEST_CASE("zero potential run: everything but the phi decay floor passes") {
  FlowConfig cfg = small_config(8);
  const TimeSeries ts = run(ot3(), cfg);
  const BoundReport rep = verify_bounds(ts.records);
  for (const auto& e : rep.entries) {
    INFO(e.name);
    if (e.name != "phi_decay") CHECK(e.pass);
  }
  CHECK(rep.at("c0_decay").note == "identically zero on the window");

  // phi solves phi' = log(1 + 2 e^{-t}) - phi, phi(0) = 0; integrate it finely
  // and fit the same window.
  std::vector<double> t, v;
  double phi = 0.0, s = 0.0;
  const double h = 1e-4;
  auto f = [](double tt, double p) { return std::log1p(2.0 * std::exp(-tt)) - p; };
  for (int k = 0; k <= 120000; ++k) {
    if (k % 5000 == 0) {
      t.push_back(s);
      v.push_back(phi);
    }
    const double k1 = f(s, phi), k2 = f(s + 0.5 * h, phi + 0.5 * h * k1), k3 = f(s + 0.5 * h, phi + 0.5 * h * k2),
                 k4 = f(s + h, phi + h * k3);
    phi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    s += h;
  }
  const double exact_rate = fit_decay(t, v, 4.0, 12.0).rate;
  CHECK(rep.at("phi_decay").measured == doctest::Approx(exact_rate).epsilon(2e-3));
  CHECK(exact_rate < 0.9);
  CHECK_FALSE(rep.at("phi_decay").pass);
}

TEST_CASE("leaf scale decays at rate one half") {
  FlowConfig cfg = small_config(8);
  cfg.rho = {{0.05, {1, 0}}};
  const TimeSeries ts = run(ot3(), cfg);
  std::vector<double> t, v;
  for (const auto& r : ts.records) {
    t.push_back(r.t);
    v.push_back(r.leaf_scale);
  }
  CHECK(std::abs(fit_decay(t, v, 4.0, 12.0).rate - 0.5) < 1e-3);
  CHECK(std::abs(fit_decay(t, v, 0.0, 12.0).rate - 0.5) < 1e-12);
}

TEST_CASE("fiber certificates re-verify and the proxy law holds") {
  const auto targets = default_fiber_targets(2);
  REQUIRE(targets.size() == 5);
  const auto certs = fiber_certificates(ot3(), targets, 0.1, 30);
  REQUIRE(certs.size() == targets.size());
  for (const auto& c : certs) {
    const EmbeddingValues ev = embed(c.approx.element, ot3().emb);
    for (std::size_t i = 0; i < c.target.size(); ++i) CHECK(std::abs(ev.real[i] - c.target[i]) < 0.1);
    CHECK(std::abs(std::abs(ev.complex) - c.approx.leaf_cost) < 1e-9);
  }
  CHECK(certs[0].approx.leaf_cost == 0.0);

  FlowConfig cfg = small_config(8);
  cfg.rho = {{0.05, {1, 0}}};
  FlowModel model(ot3(), cfg);
  const TimeSeries ts = run(model);

  const auto zero = fiber_collapse(model, ts.records, {certs[0]}, 0.1, 30);
  for (std::size_t k = 0; k < zero.times.size(); ++k) {
    const auto& r = ts.records[k];
    double ref_eig = 0.0;
    for (std::size_t p = 0; p < model.grid().size; ++p) {
      Eigen::SelfAdjointEigenSolver<Mat> es(model.ref_block(p, r.t));
      ref_eig = std::max(ref_eig, es.eigenvalues().maxCoeff());
    }
    CHECK(zero.proxy[k] == doctest::Approx(0.1 * std::sqrt(0.25 * ref_eig * (r.max_tr_ref_omega - 1.0))));
  }

  const auto fc = fiber_collapse(model, ts.records, certs, 0.1, 30);
  CHECK(std::isfinite(fc.t_star));
  CHECK(fc.leaf_cost > 0.0);
  std::vector<double> leaf;
  for (double t : fc.times) leaf.push_back(std::sqrt(model.c() * std::exp(-t)) * fc.leaf_cost);
  CHECK(std::abs(fit_decay(fc.times, leaf, 4.0, 12.0).rate - 0.5) < 1e-12);
  for (std::size_t k = 0; k < fc.times.size(); ++k)
    if (fc.times[k] > fc.t_star) CHECK(fc.proxy[k] < fc.threshold);

  CHECK(code_of([&] { fiber_certificates(ot3(), {{40.0, -40.0}}, 0.01, 2); }) == ErrorCode::NoCertificate);
}

TEST_CASE("graph distances: coincident pair and the flat limit") {
  FlowModel model(ot3(), small_config(16));
  FlowState st = init_state(model);
  st.t = 60.0;
  const auto pairs = sample_pairs(model.grid(), 12);
  REQUIRE(pairs.size() == 12);
  CHECK(pairs[0].first == pairs[0].second);
  const DistanceTable tab = base_distance_compare(model, st, pairs, 3);
  CHECK(tab.rows[0].graph == 0.0);
  CHECK(tab.rows[0].flat == 0.0);
  for (const auto& r : tab.rows) {
    CHECK(r.deviation >= 0.0);
    CHECK(r.graph >= r.flat - 1e-12);
    CHECK(r.graph <= r.flat * 1.1 + 1e-12);
  }
  CHECK(tab.torus_diameter > 0.0);
  CHECK(tab.max_deviation <= 0.05 * tab.torus_diameter);

  const auto d1 = graph_distances(model, st, 0, 1);
  const auto d3 = graph_distances(model, st, 0, 3);
  for (std::size_t p = 0; p < d1.size(); ++p) CHECK(d3[p] <= d1[p] + 1e-12);
}

TEST_CASE("base distance deviation at t = 12 is discretisation dominated") {
  FlowModel coarse(ot3(), small_config(16)), fine(ot3(), small_config(32));
  FlowState sc = init_state(coarse), sf = init_state(fine);
  sc.t = sf.t = 12.0;
  const auto pairs = sample_pairs(coarse.grid(), 10);
  std::vector<std::pair<std::size_t, std::size_t>> fine_pairs;
  for (const auto& [a, b] : pairs) {
    const auto ca = coarse.grid().coords(a), cb = coarse.grid().coords(b);
    fine_pairs.push_back({fine.grid().index({2 * ca[0], 2 * ca[1]}), fine.grid().index({2 * cb[0], 2 * cb[1]})});
  }
  const double dc = base_distance_compare(coarse, sc, pairs, 3).max_deviation;
  const double df = base_distance_compare(fine, sf, fine_pairs, 3).max_deviation;
  CHECK(dc <= 2.0 * df + 0.01);
}

TEST_CASE("curvature probe: flat, omega_OT and a perturbed reference") {
  const Tensor R = curvature(constant_field(CMat::Identity(3, 3) * 2.0, 2), Vec::Ones(2));
  CHECK(tensor_norm(R, CMat::Identity(3, 3) * 2.0) < 1e-8);

  const auto pts = probe_points(ot3().V, 2);
  REQUIRE(pts.size() == 4);
  const std::vector<double> times{0, 2, 4, 6, 8, 10, 12};
  const CurvatureProbe ot = curvature_growth_probe(form_field(FormKind::OmegaOT, 3), pts, times);
  CHECK(ot.exponent >= -0.05);
  CHECK(ot.exponent <= 0.05);

  const CurvatureProbe cross = curvature_growth_probe(cross_term_reference(ot3()), pts, times);
  CHECK(cross.exponent <= 0.55);
  CHECK(cross.norms.back() > ot.norms.back());
}

TEST_CASE("reports are deterministic plain text and CSV") {
  const BoundReport rep = verify_bounds(synthetic_passing());
  std::ostringstream a, b, c;
  write_bound_report(a, rep);
  write_bound_report(b, rep);
  write_bound_csv(c, rep);
  CHECK(a.str() == b.str());
  CHECK(a.str().find("overall: PASS") != std::string::npos);
  CHECK(c.str().rfind("name,kind,measured,threshold,margin,verdict,estimate,note\n", 0) == 0);
  int lines = 0;
  for (char ch : c.str()) lines += ch == '\n';
  CHECK(lines == 12);
}
