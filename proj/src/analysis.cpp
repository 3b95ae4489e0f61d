#include "otcrf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <queue>
#include <random>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <fmt/ranges.h>

#include "otcrf/error.hpp"

namespace otcrf {

DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& v, double t0, double t1) {
  if (t.size() != v.size()) throw Error(ErrorCode::ConfigError, "time and value series differ in length");
  std::vector<double> x, y;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < t0 - 1e-12 || t[k] > t1 + 1e-12) continue;
    if (!(v[k] > 0.0))
      throw Error(ErrorCode::NonPositiveSeries, fmt::format("value {} at t = {} is not positive", v[k], t[k]));
    x.push_back(t[k]);
    y.push_back(std::log(v[k]));
  }
  if (x.size() < 3)
    throw Error(ErrorCode::EmptyWindow, fmt::format("window [{}, {}] holds {} samples, need 3", t0, t1, x.size()));
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = y[k] - (intercept + slope * x[k]);
    ss += r * r;
  }
  DecayFit f;
  f.rate = -slope;
  f.C = std::exp(intercept);
  f.t0 = x.front();
  f.t1 = x.back();
  f.residual = std::sqrt(ss / n);
  f.samples = x.size();
  return f;
}

bool BoundReport::all_pass() const {
  return std::all_of(entries.begin(), entries.end(), [](const BoundEntry& e) { return e.pass; });
}

const BoundEntry& BoundReport::at(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw Error(ErrorCode::UnknownSeries, fmt::format("no bound entry named '{}'", name));
}

namespace {

using Getter = double (*)(const ObservableRecord&);

std::vector<double> column(const std::vector<ObservableRecord>& recs, Getter g) {
  std::vector<double> out;
  out.reserve(recs.size());
  for (const auto& r : recs) out.push_back(g(r));
  return out;
}

BoundEntry decay_entry(const std::string& name, const std::string& estimate, const std::vector<double>& t,
                       const std::vector<double>& v, double t0, double t1, double floor) {
  BoundEntry e{name, estimate, "decay", 0.0, floor, false, 0.0, ""};
  bool vanishes = true;
  for (std::size_t k = 0; k < t.size(); ++k)
    if (t[k] >= t0 - 1e-12 && t[k] <= t1 + 1e-12 && v[k] != 0.0) vanishes = false;
  if (vanishes) {
    e.measured = std::numeric_limits<double>::infinity();
    e.pass = true;
    e.margin = std::numeric_limits<double>::infinity();
    e.note = "identically zero on the window";
    return e;
  }
  try {
    const DecayFit f = fit_decay(t, v, t0, t1);
    e.measured = f.rate;
    e.margin = f.rate - floor;
    e.pass = f.rate >= floor;
    e.note = fmt::format("fit on [{:g}, {:g}], {} samples, residual {:.3g}", f.t0, f.t1, f.samples, f.residual);
  } catch (const Error& err) {
    e.measured = std::numeric_limits<double>::quiet_NaN();
    e.margin = -std::numeric_limits<double>::infinity();
    e.note = err.what();
  }
  return e;
}

BoundEntry bounded_entry(const std::string& name, const std::string& estimate, const std::vector<double>& t,
                         const std::vector<double>& v, double from, double factor) {
  BoundEntry e{name, estimate, "bounded", 0.0, 0.0, false, 0.0, ""};
  double ref = std::numeric_limits<double>::quiet_NaN(), mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < from - 1e-12) continue;
    if (std::isnan(ref)) ref = v[k];
    mx = std::max(mx, v[k]);
  }
  if (std::isnan(ref)) {
    e.note = fmt::format("no samples at t >= {:g}", from);
    e.margin = -std::numeric_limits<double>::infinity();
    return e;
  }
  e.measured = mx;
  e.threshold = factor * ref;
  e.margin = e.threshold - mx;
  e.pass = mx <= e.threshold;
  e.note = fmt::format("reference value {:.6g} at t = {:g}", ref, from);
  return e;
}

}  // namespace

BoundReport verify_bounds(const std::vector<ObservableRecord>& recs, const BoundSettings& s) {
  BoundReport rep;
  if (recs.empty()) throw Error(ErrorCode::MissingInput, "time series is empty");
  const auto t = column(recs, [](const ObservableRecord& r) { return r.t; });
  const double t0 = s.window_start, t1 = t.back(), tstart = t.front();
  auto col = [&](Getter g) { return column(recs, g); };

  rep.entries.push_back(decay_entry("phi_decay", "|phi| <= C (1+t) e^{-t}", t,
                                    col([](const ObservableRecord& r) { return r.sup_phi; }), t0, t1, s.phi_rate));
  rep.entries.push_back(bounded_entry("phidot_bounded", "|dphi/dt| <= C", t,
                                      col([](const ObservableRecord& r) { return r.sup_phidot; }), tstart,
                                      s.bounded_factor));
  rep.entries.push_back(decay_entry("phi_plus_phidot_decay", "|phi + dphi/dt| <= C e^{-sigma t}, sigma < 1/4", t,
                                    col([](const ObservableRecord& r) { return r.sup_phi_plus_phidot; }), t0, t1,
                                    s.phi_plus_phidot_rate));
  rep.entries.push_back(decay_entry("c0_decay", "|omega - omega~|_{C0(omega_0)} <= C e^{-eps t}, eps < 1/8", t,
                                    col([](const ObservableRecord& r) { return r.c0_distance; }), t0, t1, s.c0_rate));
  rep.entries.push_back(decay_entry("volume_decay", "e^t omega~^m / Omega = 1 + O(e^{-t})", t,
                                    col([](const ObservableRecord& r) { return r.volume_dev; }), t0, t1,
                                    s.volume_rate));
  rep.entries.push_back(bounded_entry("tr_ref_omega_bounded", "omega <= C omega~", t,
                                      col([](const ObservableRecord& r) { return r.max_tr_ref_omega; }), tstart,
                                      s.bounded_factor));
  rep.entries.push_back(bounded_entry("tr_omega_ref_bounded", "omega~ <= C omega", t,
                                      col([](const ObservableRecord& r) { return r.max_tr_omega_ref; }), tstart,
                                      s.bounded_factor));

  {
    BoundEntry e{"scalar_lower", "R >= -C", "bounded", 0.0, 0.0, false, 0.0, ""};
    double mn = std::numeric_limits<double>::infinity();
    for (const auto& r : recs) mn = std::min(mn, r.r_min);
    e.measured = mn;
    e.threshold = -s.bounded_factor * std::abs(recs.front().r_min);
    e.margin = mn - e.threshold;
    e.pass = mn >= e.threshold;
    e.note = fmt::format("R_min(0) = {:.6g}", recs.front().r_min);
    rep.entries.push_back(e);
  }
  {
    BoundEntry e{"scalar_upper_growth", "R <= C e^{t/2}", "growth", 0.0, s.scalar_growth, false, 0.0, ""};
    std::vector<double> v;
    for (const auto& r : recs) v.push_back(std::max(r.r_max, 1.0));
    try {
      const DecayFit f = fit_decay(t, v, t0, t1);
      e.measured = -f.rate;
      e.margin = s.scalar_growth - e.measured;
      e.pass = e.measured <= s.scalar_growth;
      e.note = fmt::format("growth exponent of max(R_max, 1) on [{:g}, {:g}]", f.t0, f.t1);
    } catch (const Error& err) {
      e.measured = std::numeric_limits<double>::quiet_NaN();
      e.margin = -std::numeric_limits<double>::infinity();
      e.note = err.what();
    }
    rep.entries.push_back(e);
  }
  rep.entries.push_back(bounded_entry("calabi_bounded", "|nabla~ g|^2_g <= C", t,
                                      col([](const ObservableRecord& r) { return r.calabi; }),
                                      s.calabi_reference_time, s.bounded_factor));
  rep.entries.push_back(bounded_entry("c1_bounded", "|g|_{C1(omega_OT)} <= C", t,
                                      col([](const ObservableRecord& r) { return r.c1_norm; }), tstart,
                                      s.bounded_factor));
  return rep;
}

std::vector<Vec> probe_points(const Mat& V, int k) {
  const auto d = V.rows();
  std::vector<Vec> pts;
  std::vector<int> idx(d, 0);
  while (true) {
    Vec xi(d);
    for (Eigen::Index a = 0; a < d; ++a) xi[a] = (idx[a] + 0.5) / k;
    pts.push_back((V.transpose() * xi).array().exp().matrix());
    Eigen::Index a = 0;
    while (a < d && idx[a] == k - 1) idx[a++] = 0;
    if (a == d) break;
    ++idx[a];
  }
  return pts;
}

CurvatureProbe curvature_growth_probe(const MetricField& lf, const std::vector<Vec>& sample_y,
                                      const std::vector<double>& times, double c) {
  CurvatureProbe out;
  out.times = times;
  out.norms.assign(times.size(), 0.0);
  const auto nt = static_cast<std::int64_t>(times.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t k = 0; k < nt; ++k) {
    const MetricField g = reference_metric(times[k], lf, c);
    double best = 0.0;
    for (const Vec& y : sample_y) best = std::max(best, tensor_norm(curvature(g, y), g(y)));
    out.norms[k] = best;
  }
  const DecayFit f = fit_decay(times, out.norms, times.front(), times.back());
  out.exponent = -f.rate;
  return out;
}

MetricField cross_term_reference(const OTStructure& ot) {
  const int d = static_cast<int>(ot.V.rows());
  return invariant_field(
      ot.V,
      [d](const Vec& xi) {
        const double w = 0.2 * std::cos(2.0 * M_PI * xi[0]);
        CMat M = CMat::Zero(d + 1, d + 1);
        M.topLeftCorner(d, d) = (Mat::Ones(d, d) + (1.0 + w) * Mat::Identity(d, d)).cast<Complex>();
        M(0, d) = M(d, 0) = w;
        M(d, d) = 1.0;
        return M;
      },
      "cross-term", false);
}

std::vector<std::vector<double>> default_fiber_targets(int dim) {
  std::vector<std::vector<double>> out;
  out.push_back(std::vector<double>(dim, 0.0));
  out.push_back(std::vector<double>(dim, 0.5));
  for (int a = 0; a < dim; ++a) {
    std::vector<double> v(dim, 0.0);
    v[a] = 0.5;
    out.push_back(v);
  }
  if (dim >= 2) {
    std::vector<double> v(dim, 0.25);
    v[1] = 0.75;
    out.push_back(v);
  }
  std::vector<std::vector<double>> unique;
  for (const auto& v : out)
    if (std::find(unique.begin(), unique.end(), v) == unique.end()) unique.push_back(v);
  return unique;
}

std::vector<Certificate> fiber_certificates(const OTStructure& ot, const std::vector<std::vector<double>>& targets,
                                            double delta, int coeff_bound) {
  std::vector<Certificate> out;
  for (const auto& target : targets) {
    auto a = lattice_approximate(target, delta, coeff_bound, ot.emb);
    if (!a)
      throw Error(ErrorCode::NoCertificate,
                  fmt::format("no element with coordinates in [-{0}, {0}] lies within {1} of ({2:.4f})", coeff_bound,
                              delta, fmt::join(target, ", ")));
    out.push_back({target, *a});
  }
  return out;
}

FiberCollapse fiber_collapse(const FlowModel& model, const std::vector<ObservableRecord>& records,
                             const std::vector<Certificate>& certificates, double delta, int coeff_bound,
                             double threshold) {
  FiberCollapse fc;
  fc.delta = delta;
  fc.coeff_bound = coeff_bound;
  fc.certificates = certificates;
  fc.threshold = threshold;
  for (const auto& c : certificates) fc.leaf_cost = std::max(fc.leaf_cost, c.approx.leaf_cost);
  const double c = model.c();
  const std::size_t n = model.grid().size;
  for (const auto& r : records) {
    double ref_eig = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      Eigen::SelfAdjointEigenSolver<Mat> es(model.ref_block(p, r.t), Eigen::EigenvaluesOnly);
      ref_eig = std::max(ref_eig, es.eigenvalues().maxCoeff());
    }
    const double base_eig = 0.25 * ref_eig * (r.max_tr_ref_omega - 1.0);
    fc.base_eig_sup = std::max(fc.base_eig_sup, base_eig);
    fc.times.push_back(r.t);
    fc.proxy.push_back(std::sqrt(c * std::exp(-r.t)) * fc.leaf_cost + delta * std::sqrt(base_eig));
  }
  std::vector<double> base;
  for (std::size_t k = 0; k < fc.proxy.size(); ++k) {
    const double leaf = std::sqrt(c * std::exp(-fc.times[k])) * fc.leaf_cost;
    base.push_back(fc.proxy[k] - leaf);
  }
  std::size_t k0 = fc.proxy.size();
  while (k0 > 0 && fc.proxy[k0 - 1] < threshold) --k0;
  if (k0 == fc.proxy.size()) {
    fc.t_star = std::numeric_limits<double>::infinity();
  } else if (k0 == 0) {
    fc.t_star = fc.times.front();
  } else {
    const double room = threshold - *std::max_element(base.begin() + static_cast<std::ptrdiff_t>(k0 - 1), base.end());
    double t_law = fc.times[k0];
    if (room > 0.0 && fc.leaf_cost > 0.0) t_law = 2.0 * std::log(std::sqrt(c) * fc.leaf_cost / room);
    fc.t_star = std::clamp(t_law, fc.times[k0 - 1], fc.times[k0]);
  }
  return fc;
}

std::vector<double> graph_distances(const FlowModel& model, const FlowState& state, std::size_t source,
                                    int stencil_radius) {
  const Grid& g = model.grid();
  const int d = g.d;
  const std::size_t n = g.size;
  std::vector<Mat> K(n);
  for (std::size_t p = 0; p < n; ++p) K[p] = model.K(state.psi, p, state.t);

  std::vector<std::vector<int>> offsets;
  std::vector<int> o(d, -stencil_radius);
  while (true) {
    int gcd = 0;
    for (int v : o) gcd = std::gcd(gcd, std::abs(v));
    if (gcd == 1) offsets.push_back(o);
    int a = 0;
    while (a < d && o[a] == stencil_radius) o[a++] = -stencil_radius;
    if (a == d) break;
    ++o[a];
  }
  std::vector<Vec> du;
  for (const auto& off : offsets) {
    Vec xi(d);
    for (int a = 0; a < d; ++a) xi[a] = off[a] * g.h;
    du.push_back(g.V.transpose() * xi);
  }

  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[source] = 0.0;
  pq.push({0.0, source});
  while (!pq.empty()) {
    const auto [dp, p] = pq.top();
    pq.pop();
    if (dp > dist[p]) continue;
    const auto c = g.coords(p);
    for (std::size_t e = 0; e < offsets.size(); ++e) {
      std::vector<int> cq = c;
      for (int a = 0; a < d; ++a) cq[a] += offsets[e][a];
      const std::size_t q = g.index(cq);
      const Mat Kmid = 0.5 * (K[p] + K[q]);
      const double len = std::sqrt(0.5 * du[e].dot(Kmid * du[e]));
      if (dp + len < dist[q]) {
        dist[q] = dp + len;
        pq.push({dist[q], q});
      }
    }
  }
  return dist;
}

double torus_diameter(const OTStructure& ot, int samples) {
  const auto d = ot.V.rows();
  const Vec zero = Vec::Zero(d);
  double best = 0.0;
  std::vector<int> idx(d, 0);
  while (true) {
    Vec xi(d);
    for (Eigen::Index a = 0; a < d; ++a) xi[a] = static_cast<double>(idx[a]) / samples;
    best = std::max(best, torus_distance(zero, xi, ot));
    Eigen::Index a = 0;
    while (a < d && idx[a] == samples - 1) idx[a++] = 0;
    if (a == d) break;
    ++idx[a];
  }
  return best;
}

std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(const Grid& grid, int count, unsigned seed) {
  std::mt19937 rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto first = static_cast<std::size_t>(rng() % grid.size);
  out.push_back({first, first});
  while (static_cast<int>(out.size()) < count) {
    const auto a = static_cast<std::size_t>(rng() % grid.size);
    const auto b = static_cast<std::size_t>(rng() % grid.size);
    out.push_back({a, b});
  }
  return out;
}

DistanceTable base_distance_compare(const FlowModel& model, const FlowState& state,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                    int stencil_radius) {
  DistanceTable table;
  table.stencil_radius = stencil_radius;
  table.torus_diameter = torus_diameter(model.ot());
  table.rows.resize(pairs.size());
  const auto np = static_cast<std::int64_t>(pairs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t k = 0; k < np; ++k) {
    const auto [a, b] = pairs[k];
    const auto dist = graph_distances(model, state, a, stencil_radius);
    DistanceRow& row = table.rows[k];
    row.a = a;
    row.b = b;
    row.graph = dist[b];
    row.flat = torus_distance(model.grid().xi(a), model.grid().xi(b), model.ot());
    row.deviation = std::abs(row.graph - row.flat);
  }
  for (const auto& r : table.rows) table.max_deviation = std::max(table.max_deviation, r.deviation);
  return table;
}

void write_bound_report(std::ostream& out, const BoundReport& rep) {
  fmt::print(out, "# otcrf bound report v1\n");
  fmt::print(out, "{:<24} {:<8} {:>14} {:>14} {:>14}  {:<7} {}\n", "name", "kind", "measured", "threshold", "margin",
             "verdict", "estimate");
  for (const auto& e : rep.entries)
    fmt::print(out, "{:<24} {:<8} {:>14.6g} {:>14.6g} {:>14.6g}  {:<7} {}  [{}]\n", e.name, e.kind, e.measured,
               e.threshold, e.margin, e.pass ? "PASS" : "FAIL", e.estimate, e.note);
  fmt::print(out, "overall: {}\n", rep.all_pass() ? "PASS" : "FAIL");
}

namespace {

std::string csv_field(const std::string& s) {
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

}  // namespace

void write_bound_csv(std::ostream& out, const BoundReport& rep) {
  fmt::print(out, "name,kind,measured,threshold,margin,verdict,estimate,note\n");
  for (const auto& e : rep.entries)
    fmt::print(out, "{},{},{:.17g},{:.17g},{:.17g},{},{},{}\n", e.name, e.kind, e.measured, e.threshold, e.margin,
               e.pass ? "pass" : "fail", csv_field(e.estimate), csv_field(e.note));
}

void write_gh_report(std::ostream& out, const GHReport& r) {
  fmt::print(out, "# otcrf collapse report v1\n");
  fmt::print(out, "leaf_scale_fit rate={:.6f} C={:.6g} window=[{:g}, {:g}] residual={:.3g}\n", r.leaf_fit.rate,
             r.leaf_fit.C, r.leaf_fit.t0, r.leaf_fit.t1, r.leaf_fit.residual);
  const auto& fc = r.collapse;
  fmt::print(out, "certificates delta={:g} coeff_bound={} count={}\n", fc.delta, fc.coeff_bound,
             fc.certificates.size());
  for (const auto& c : fc.certificates)
    fmt::print(out, "  target=({:.4f}) element=[{}] sigma=({:.6f}) max_error={:.3g} leaf_cost={:.6g}\n",
               fmt::join(c.target, ", "), fmt::join(c.approx.element.coords, ","), fmt::join(c.approx.sigma, ", "),
               c.approx.max_error, c.approx.leaf_cost);
  fmt::print(out, "leaf_cost_max={:.6g} base_eig_sup={:.6g} threshold={:g} t_star={:.6g}\n", fc.leaf_cost,
             fc.base_eig_sup, fc.threshold, fc.t_star);
  for (std::size_t k = 0; k < fc.times.size(); ++k)
    fmt::print(out, "  proxy t={:g} value={:.6g}\n", fc.times[k], fc.proxy[k]);
  const auto& dt = r.distances;
  fmt::print(out, "base_distances stencil_radius={} torus_diameter={:.6g} max_deviation={:.6g} ratio={:.6g}\n",
             dt.stencil_radius, dt.torus_diameter, dt.max_deviation, dt.max_deviation / dt.torus_diameter);
  for (const auto& row : dt.rows)
    fmt::print(out, "  pair {} {} graph={:.6g} flat={:.6g} deviation={:.3g}\n", row.a, row.b, row.graph, row.flat,
               row.deviation);
}

void write_gh_csv(std::ostream& out, const GHReport& r) {
  fmt::print(out, "section,key,value1,value2,value3\n");
  fmt::print(out, "leaf_fit,rate,{:.17g},{:.17g},{:.17g}\n", r.leaf_fit.rate, r.leaf_fit.C, r.leaf_fit.residual);
  for (const auto& c : r.collapse.certificates)
    fmt::print(out, "certificate,{},{},{:.17g},{:.17g}\n", csv_field(fmt::format("{}", fmt::join(c.target, " "))),
               csv_field(fmt::format("{}", fmt::join(c.approx.element.coords, " "))), c.approx.max_error,
               c.approx.leaf_cost);
  for (std::size_t k = 0; k < r.collapse.times.size(); ++k)
    fmt::print(out, "proxy,{:g},{:.17g},,\n", r.collapse.times[k], r.collapse.proxy[k]);
  fmt::print(out, "collapse,t_star,{:.17g},{:.17g},{:.17g}\n", r.collapse.t_star, r.collapse.leaf_cost,
             r.collapse.base_eig_sup);
  for (const auto& row : r.distances.rows)
    fmt::print(out, "distance,{}-{},{:.17g},{:.17g},{:.17g}\n", row.a, row.b, row.graph, row.flat, row.deviation);
  fmt::print(out, "distance,max,{:.17g},{:.17g},{}\n", r.distances.max_deviation, r.distances.torus_diameter,
             r.distances.stencil_radius);
}

}  // namespace otcrf
