#include "otcrf/flow.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "otcrf/error.hpp"

namespace otcrf {

Scheme parse_scheme(const std::string& name) {
  if (name == "euler") return Scheme::Euler;
  if (name == "rk2") return Scheme::RK2;
  throw Error(ErrorCode::ConfigError, fmt::format("unknown scheme '{}' (expected euler or rk2)", name));
}

std::string_view scheme_name(Scheme s) { return s == Scheme::Euler ? "euler" : "rk2"; }

void validate_config(const FlowConfig& cfg) {
  if (!(cfg.t_end >= 0.0)) throw Error(ErrorCode::ConfigError, "t_end must be nonnegative");
  if (!(cfg.cfl > 0.0 && cfg.cfl < 1.0)) throw Error(ErrorCode::ConfigError, "cfl must lie in (0, 1)");
  if (!(cfg.stride > 0.0)) throw Error(ErrorCode::ConfigError, "stride must be positive");
  if (!(cfg.dt_max > 0.0)) throw Error(ErrorCode::ConfigError, "dt_max must be positive");
  if (cfg.fixed_dt < 0.0) throw Error(ErrorCode::ConfigError, "fixed_dt must be nonnegative");
  if (cfg.N < 4) throw Error(ErrorCode::ConfigError, "N must be at least 4");
  if (cfg.reference.kind != "ot" && cfg.reference.kind != "perturbed")
    throw Error(ErrorCode::ConfigError, fmt::format("unknown reference kind '{}'", cfg.reference.kind));
  if (std::abs(cfg.reference.alpha_amp) >= 1.0 || std::abs(cfg.reference.beta_amp) >= 1.0)
    throw Error(ErrorCode::ConfigError, "reference perturbation amplitudes must be below 1");
}

namespace {

double rho_value(const std::vector<RhoTerm>& terms, const Vec& xi) {
  double v = 0.0;
  for (const auto& term : terms) {
    double phase = 0.0;
    for (std::size_t a = 0; a < term.k.size() && a < static_cast<std::size_t>(xi.size()); ++a)
      phase += term.k[a] * xi[static_cast<Eigen::Index>(a)];
    v += term.amp * std::cos(2.0 * M_PI * phase);
  }
  return v;
}

Mat lf_normalised(const ReferenceSpec& ref, const Vec& xi) {
  const auto d = xi.size();
  Mat M = Mat::Ones(d, d) + Mat::Identity(d, d);
  if (ref.kind == "perturbed") {
    const double a = 1.0 + ref.alpha_amp * std::cos(2.0 * M_PI * xi[0]);
    const double w = 1.0 + ref.beta_amp * std::sin(2.0 * M_PI * xi[d > 1 ? 1 : 0]);
    M = Mat::Ones(d, d);
    M.diagonal().array() += a;
    M /= w;
  }
  return M;
}

// Moves the grid average of psi into mean so that psi keeps the precision of
// its smallest spatial modes.
void recentre(std::vector<double>& psi, double& mean) {
  double acc = 0.0;
  for (double v : psi) acc += v;
  const double avg = acc / static_cast<double>(psi.size());
  for (double& v : psi) v -= avg;
  mean += avg;
}

Mat block_at(const std::vector<double>& v, std::size_t p, int d) {
  Mat M(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) M(i, j) = v[p * d * d + i * d + j];
  return M;
}

}  // namespace

FlowModel::FlowModel(const OTStructure& ot, const FlowConfig& cfg) : ot_(ot), cfg_(cfg) {
  validate_config(cfg);
  grid_ = Grid(ot.V, cfg.N);
  const int d = grid_.d;
  lf_.resize(grid_.size * d * d);
  rho_.resize(grid_.size);
  for (std::size_t p = 0; p < grid_.size; ++p) {
    const Vec xi = grid_.xi(p);
    const Mat M = lf_normalised(cfg.reference, xi);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) lf_[p * d * d + i * d + j] = M(i, j);
    rho_[p] = rho_value(cfg.rho, xi);
  }
  k0_.resize(lf_.size());
  hessian_field_serial(grid_, rho_.data(), k0_.data());
  for (std::size_t k = 0; k < k0_.size(); ++k) k0_[k] += lf_[k];
  op_scale_ = (grid_.W.transpose() * grid_.W).cwiseAbs().sum();
  lf_uniform_ = true;
  for (std::size_t k = 0; k < lf_.size(); ++k)
    if (lf_[k] != lf_[k % (d * d)]) lf_uniform_ = false;
}

MetricField FlowModel::leaf_metric() const {
  const ReferenceSpec ref = cfg_.reference;
  const int d = grid_.d;
  return invariant_field(
      grid_.V,
      [ref, d](const Vec& xi) {
        CMat M = CMat::Zero(d + 1, d + 1);
        M.topLeftCorner(d, d) = lf_normalised(ref, xi).cast<Complex>();
        M(d, d) = 1.0;
        return M;
      },
      "leaf-metric", true);
}

Mat FlowModel::lf_at(std::size_t p) const { return block_at(lf_, p, grid_.d); }

Mat FlowModel::ref_block(std::size_t p, double t) const {
  const double e = std::exp(-t);
  const int d = grid_.d;
  return e * lf_at(p) + (1.0 - e) * Mat::Identity(d, d);
}

Mat FlowModel::K(const std::vector<double>& phi, std::size_t p, double t) const {
  return ref_block(p, t) + hessian_at(grid_, phi.data(), p);
}

Mat FlowModel::normalised_metric(const std::vector<double>& phi, std::size_t p, double t) const {
  const int d = grid_.d;
  Mat G = Mat::Zero(d + 1, d + 1);
  G.topLeftCorner(d, d) = K(phi, p, t);
  G(d, d) = ot_.c * std::exp(-t);
  return G;
}

bool FlowModel::rhs(const std::vector<double>& psi, double mean, double t, std::vector<double>& dpsi,
                    double& lam_min, double& rhs_mean) const {
  const std::size_t n = grid_.size;
  std::vector<double> ref(n), rel(n), lam(n);
  KernelInput in{&grid_, psi.data(), lf_.data(), lf_uniform_, t};
  KernelOutput out{ref.data(), rel.data(), lam.data()};
  if (cfg_.parallel)
    ma_rhs_omp(in, out);
  else
    ma_rhs_serial(in, out);
  lam_min = std::numeric_limits<double>::infinity();
  for (double l : lam) {
    if (!(l > 0.0)) return false;
    lam_min = std::min(lam_min, l);
  }
  // Offsets from ref[0] vanish exactly when the reference block is constant.
  double ref_acc = 0.0, rel_acc = 0.0, psi_acc = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    ref_acc += ref[p] - ref[0];
    rel_acc += rel[p];
    psi_acc += psi[p];
  }
  const double inv = 1.0 / static_cast<double>(n);
  const double ref_off = ref_acc * inv, rel_mean = rel_acc * inv, psi_mean = psi_acc * inv;
  dpsi.resize(n);
  for (std::size_t p = 0; p < n; ++p)
    dpsi[p] = ((ref[p] - ref[0]) - ref_off) + (rel[p] - rel_mean) - (psi[p] - psi_mean);
  rhs_mean = ref[0] + ref_off + rel_mean - mean - psi_mean;
  return true;
}

std::vector<double> FlowState::phi() const {
  std::vector<double> out(psi.size());
  for (std::size_t p = 0; p < psi.size(); ++p) out[p] = mean + psi[p];
  return out;
}

std::vector<double> FlowState::phidot() const {
  std::vector<double> out(dpsi.size());
  for (std::size_t p = 0; p < dpsi.size(); ++p) out[p] = rhs_mean + dpsi[p];
  return out;
}

FlowState init_state(const FlowModel& model) {
  FlowState st;
  const auto& rho = model.rho();
  double acc = 0.0;
  for (double v : rho) acc += v;
  st.mean = acc / static_cast<double>(rho.size());
  st.psi.resize(rho.size());
  for (std::size_t p = 0; p < rho.size(); ++p) st.psi[p] = rho[p] - st.mean;
  st.t = 0.0;
  if (!model.rhs(st.psi, st.mean, 0.0, st.dpsi, st.lam_min, st.rhs_mean)) {
    std::size_t bad = 0;
    const int d = model.d();
    for (std::size_t p = 0; p < model.grid().size; ++p) {
      Eigen::SelfAdjointEigenSolver<Mat> es(block_at(model.k0(), p, d));
      if (!(es.eigenvalues().minCoeff() > 0.0)) {
        bad = p;
        break;
      }
    }
    const Vec xi = model.grid().xi(bad);
    throw Error(ErrorCode::InitialMetricNotPositive,
                fmt::format("omega_0 = omega_LF + d dbar rho is not positive at xi = ({:.4f})",
                            fmt::join(std::vector<double>(xi.data(), xi.data() + xi.size()), ", ")));
  }
  st.rhs_evals = 1;
  return st;
}

Mat reduced_hessian(const FlowModel& model, const std::vector<double>& phi, std::size_t p) {
  const Grid& g = model.grid();
  const Mat Hh = hessian_at(g, phi.data(), p);
  const Vec u = g.V.transpose() * g.xi(p);
  Mat H = Hh;
  for (int i = 0; i < g.d; ++i)
    for (int j = 0; j < g.d; ++j) H(i, j) *= std::exp(-u[i] - u[j]);
  return H;
}

double adaptive_dt(const FlowModel& model, const FlowState& state) {
  const FlowConfig& cfg = model.config();
  if (cfg.fixed_dt > 0.0) return cfg.fixed_dt;
  const double h = model.grid().h;
  return std::min(cfg.dt_max, cfg.cfl * h * h * state.lam_min / model.operator_scale());
}

void step(const FlowModel& model, FlowState& st, double dt_cap) {
  double dt = std::min(adaptive_dt(model, st), dt_cap);
  const std::size_t n = st.psi.size();
  std::vector<double> next(n), mid(n), k2, nd;
  double lam = 0.0, lam2 = 0.0, nd_mean = 0.0, k2_mean = 0.0, next_mean = 0.0;
  for (int attempt = 0; attempt <= 20; ++attempt) {
    bool ok;
    if (model.config().scheme == Scheme::Euler) {
      for (std::size_t p = 0; p < n; ++p) next[p] = st.psi[p] + dt * st.dpsi[p];
      next_mean = st.mean + dt * st.rhs_mean;
      recentre(next, next_mean);
      ok = model.rhs(next, next_mean, st.t + dt, nd, lam, nd_mean);
      st.rhs_evals += 1;
    } else {
      for (std::size_t p = 0; p < n; ++p) mid[p] = st.psi[p] + dt * st.dpsi[p];
      double mid_mean = st.mean + dt * st.rhs_mean;
      recentre(mid, mid_mean);
      ok = model.rhs(mid, mid_mean, st.t + dt, k2, lam2, k2_mean);
      st.rhs_evals += 1;
      if (ok) {
        for (std::size_t p = 0; p < n; ++p)
          next[p] = st.psi[p] + 0.5 * dt * (st.dpsi[p] + k2[p]);
        next_mean = st.mean + 0.5 * dt * (st.rhs_mean + k2_mean);
        recentre(next, next_mean);
        ok = model.rhs(next, next_mean, st.t + dt, nd, lam, nd_mean);
        st.rhs_evals += 1;
      }
    }
    if (ok) {
      st.psi.swap(next);
      st.mean = next_mean;
      st.dpsi.swap(nd);
      st.rhs_mean = nd_mean;
      st.lam_min = lam;
      st.t += dt;
      st.dt_last = dt;
      st.steps += 1;
      return;
    }
    dt *= 0.5;
    st.halvings += 1;
  }
  throw FlowDegenerateError(st.t, fmt::format("positivity lost at t = {} after 20 step halvings", st.t));
}

const std::array<std::string_view, ObservableRecord::kColumns>& ObservableRecord::names() {
  static const std::array<std::string_view, kColumns> n{
      "t",          "sup_phi",   "sup_phidot", "sup_phi_plus_phidot", "max_tr_ref_omega",
      "max_tr_omega_ref", "c0_distance", "r_min", "r_max", "calabi", "leaf_scale", "volume_dev", "c1_norm"};
  return n;
}

std::array<double, ObservableRecord::kColumns> ObservableRecord::values() const {
  return {t,     sup_phi, sup_phidot, sup_phi_plus_phidot, max_tr_ref_omega, max_tr_omega_ref, c0_distance,
          r_min, r_max,   calabi,     leaf_scale,          volume_dev,       c1_norm};
}

ObservableRecord ObservableRecord::from_values(const std::array<double, kColumns>& v) {
  ObservableRecord r;
  r.t = v[0];
  r.sup_phi = v[1];
  r.sup_phidot = v[2];
  r.sup_phi_plus_phidot = v[3];
  r.max_tr_ref_omega = v[4];
  r.max_tr_omega_ref = v[5];
  r.c0_distance = v[6];
  r.r_min = v[7];
  r.r_max = v[8];
  r.calabi = v[9];
  r.leaf_scale = v[10];
  r.volume_dev = v[11];
  r.c1_norm = v[12];
  return r;
}

namespace {

double form_norm(const Mat& Minv, const Mat& A) { return std::sqrt(std::max(0.0, (Minv * A * Minv * A).trace())); }

struct PointObs {
  double tr1, tr2, c0, logdet, vol, calabi, c1, r;
};

}  // namespace

ObservableRecord observables(const FlowModel& model, const FlowState& st) {
  const Grid& g = model.grid();
  const int d = g.d;
  const std::size_t n = g.size;
  const double t = st.t;
  const double e = std::exp(-t);

  std::vector<double> hh(n * d * d), mt(n * d * d);
  if (model.config().parallel)
    hessian_field_omp(g, st.psi.data(), hh.data());
  else
    hessian_field_serial(g, st.psi.data(), hh.data());
  const auto& lf = model.lf_block();
  for (std::size_t k = 0; k < hh.size(); ++k) {
    const int i = static_cast<int>((k / d) % d), j = static_cast<int>(k % d);
    mt[k] = e * lf[k] + (i == j ? 1.0 - e : 0.0);
  }

  std::vector<PointObs> obs(n);
  std::vector<double> L(n);
  Mat Mot = Mat::Ones(d, d) + Mat::Identity(d, d);
  const Mat MotInv = Mot.inverse();
  const double leaf = model.c() * e;

  auto d_u = [&](const std::vector<double>& field, std::size_t p, int i) {
    Mat acc = Mat::Zero(d, d);
    for (int a = 0; a < d; ++a) {
      const double w = g.W(i, a);
      if (w == 0.0) continue;
      acc += w * (block_at(field, g.plus[a * n + p], d) - block_at(field, g.minus[a * n + p], d)) / (2.0 * g.h);
    }
    return acc;
  };

  const auto np = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (model.config().parallel)
  for (std::int64_t q = 0; q < np; ++q) {
    const auto p = static_cast<std::size_t>(q);
    const Mat Mt = block_at(mt, p, d);
    const Mat Hh = block_at(hh, p, d);
    const Mat K = Mt + Hh;
    const Mat M0 = block_at(model.k0(), p, d);
    const Mat Kinv = K.inverse();
    const Mat MtInv = Mt.inverse();
    PointObs& o = obs[p];
    o.tr1 = (MtInv * K).trace() + 1.0;
    o.tr2 = (Kinv * Mt).trace() + 1.0;
    o.c0 = form_norm(M0.inverse(), Hh);
    o.logdet = std::log(Mt.determinant()) + log_det_one_plus(MtInv * Hh);
    o.vol = std::abs(Mt.determinant() - 1.0);

    // Christoffel difference in the frame y = 1 (the quantity is invariant),
    // arranged so that every term is proportional to Hhat or its derivative.
    const Mat G = 0.25 * K;
    const Mat H = 4.0 * Kinv;
    const Mat KHM = Kinv * Hh * MtInv;
    std::vector<Mat> P(d);
    double c1 = 0.0;
    for (int i = 0; i < d; ++i) {
      const Mat dH = d_u(hh, p, i);
      const Mat dM = d_u(mt, p, i);
      Mat E = Mat::Zero(d, d);
      E(i, i) = 1.0;
      P[i] = dH * Kinv - dM * KHM - (Hh * E * Kinv - Mt * E * KHM);  // P[i](j, k) = Psi^k_{ij} up to -i/2
      c1 += form_norm(MotInv, dM + dH);
    }
    double S = 0.0;
    for (int k = 0; k < d; ++k)
      for (int k2 = 0; k2 < d; ++k2)
        for (int i = 0; i < d; ++i)
          for (int i2 = 0; i2 < d; ++i2)
            for (int j = 0; j < d; ++j)
              for (int j2 = 0; j2 < d; ++j2) S += P[i](j, k) * P[i2](j2, k2) * G(k, k2) * H(i2, i) * H(j2, j);
    o.calabi = 0.25 * S;
    o.c1 = std::sqrt(form_norm(MotInv, K) * form_norm(MotInv, K) + leaf * leaf) + c1;
    L[p] = o.logdet;
  }

#pragma omp parallel for schedule(static) if (model.config().parallel)
  for (std::int64_t q = 0; q < np; ++q) {
    const auto p = static_cast<std::size_t>(q);
    const Mat K = block_at(mt, p, d) + block_at(hh, p, d);
    const Mat HL = hessian_at(g, L.data(), p);
    obs[p].r = -(K.inverse() * (Mat::Identity(d, d) + HL)).trace();
  }

  ObservableRecord r;
  r.t = t;
  r.r_min = std::numeric_limits<double>::infinity();
  r.r_max = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < n; ++p) {
    const PointObs& o = obs[p];
    const double phi = st.mean + st.psi[p];
    const double phidot = o.logdet - phi;
    r.sup_phi = std::max(r.sup_phi, std::abs(phi));
    r.sup_phidot = std::max(r.sup_phidot, std::abs(phidot));
    r.sup_phi_plus_phidot = std::max(r.sup_phi_plus_phidot, std::abs(o.logdet));
    r.max_tr_ref_omega = std::max(r.max_tr_ref_omega, o.tr1);
    r.max_tr_omega_ref = std::max(r.max_tr_omega_ref, o.tr2);
    r.c0_distance = std::max(r.c0_distance, o.c0);
    r.r_min = std::min(r.r_min, o.r);
    r.r_max = std::max(r.r_max, o.r);
    r.calabi = std::max(r.calabi, o.calabi);
    r.volume_dev = std::max(r.volume_dev, o.vol);
    r.c1_norm = std::max(r.c1_norm, o.c1);
  }
  r.leaf_scale = std::sqrt(model.c() * e);
  return r;
}

TimeSeries run(const FlowModel& model, const ProgressFn& progress) {
  const FlowConfig& cfg = model.config();
  TimeSeries ts;
  FlowState st = init_state(model);
  ts.records.push_back(observables(model, st));
  std::vector<double> outputs;
  for (int k = 1;; ++k) {
    const double tk = k * cfg.stride;
    if (tk > cfg.t_end + 1e-12) break;
    outputs.push_back(tk);
  }
  if (cfg.t_end > 0.0 && (outputs.empty() || outputs.back() < cfg.t_end - 1e-12)) outputs.push_back(cfg.t_end);
  for (double target : outputs) {
    while (st.t < target - 1e-12) step(model, st, target - st.t);
    st.t = target;
    ts.records.push_back(observables(model, st));
    if (progress) progress(st);
  }
  ts.final_state = std::move(st);
  return ts;
}

TimeSeries run(const OTStructure& ot, const FlowConfig& cfg, const ProgressFn& progress) {
  FlowModel model(ot, cfg);
  return run(model, progress);
}

void write_csv(std::ostream& out, const std::vector<ObservableRecord>& records) {
  out << "# schema=" << kCsvSchema << "\n";
  const auto& names = ObservableRecord::names();
  for (std::size_t k = 0; k < names.size(); ++k)
    out << (k ? "," : "") << names[k] << (k == 0 ? "[flow_time]" : "[1]");
  out << "\n";
  for (const auto& r : records) {
    const auto v = r.values();
    for (std::size_t k = 0; k < v.size(); ++k) fmt::print(out, "{}{:.17g}", k ? "," : "", v[k]);
    out << "\n";
  }
}

std::vector<ObservableRecord> read_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, source + ": empty time series file");
  const std::string prefix = "# schema=";
  if (line.rfind(prefix, 0) != 0)
    throw Error(ErrorCode::SchemaMismatch, source + ": missing schema line");
  const std::string schema = line.substr(prefix.size());
  if (schema != kCsvSchema)
    throw Error(ErrorCode::SchemaMismatch,
                fmt::format("{}: schema '{}' does not match '{}'", source, schema, kCsvSchema));
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, source + ": missing header row");
  std::ostringstream expected;
  write_csv(expected, {});
  const std::string header = expected.str().substr(expected.str().find('\n') + 1);
  if (line + "\n" != header) throw Error(ErrorCode::SchemaMismatch, source + ": unexpected header row");

  std::vector<ObservableRecord> records;
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::array<double, ObservableRecord::kColumns> v{};
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (std::size_t k = 0; k < v.size(); ++k) {
      auto res = std::from_chars(p, end, v[k]);
      if (res.ec != std::errc())
        throw Error(ErrorCode::ParseError, fmt::format("{}:{}: bad number in column {}", source, lineno, k + 1));
      p = res.ptr;
      if (k + 1 < v.size()) {
        if (p == end || *p != ',')
          throw Error(ErrorCode::ParseError, fmt::format("{}:{}: expected {} columns", source, lineno, v.size()));
        ++p;
      }
    }
    if (p != end) throw Error(ErrorCode::ParseError, fmt::format("{}:{}: trailing data", source, lineno));
    records.push_back(ObservableRecord::from_values(v));
  }
  return records;
}

void write_state(std::ostream& out, const FlowState& st, int N, int d) {
  out << "# otcrf-state/2\n";
  fmt::print(out, "t = {:.17g}\nN = {}\nd = {}\nmean = {:.17g}\n", st.t, N, d, st.mean);
  for (double v : st.psi) fmt::print(out, "{:.17g}\n", v);
}

FlowState read_state(std::istream& in, int N, int d, const std::string& source) {
  auto number = [&](const std::string& text, auto& out) {
    const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
      throw Error(ErrorCode::ParseError, fmt::format("{}: bad number '{}'", source, text));
  };
  std::string line;
  std::getline(in, line);
  if (line != "# otcrf-state/2") throw Error(ErrorCode::SchemaMismatch, source + ": not a potential dump");
  FlowState st;
  int n = 0, dd = 0;
  for (int k = 0; k < 4; ++k) {
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, source + ": truncated header");
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw Error(ErrorCode::ParseError, source + ": bad header line");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 3);
    if (key == "t") number(val, st.t);
    else if (key == "N") number(val, n);
    else if (key == "d") number(val, dd);
    else if (key == "mean") number(val, st.mean);
  }
  if (n != N || dd != d)
    throw Error(ErrorCode::ConfigError, fmt::format("{}: grid {}^{} does not match the run ({}^{})", source, n, dd, N, d));
  std::size_t total = 1;
  for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(N);
  st.psi.reserve(total);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double v = 0.0;
    number(line, v);
    st.psi.push_back(v);
  }
  if (st.psi.size() != total) throw Error(ErrorCode::ParseError, source + ": wrong number of grid values");
  return st;
}

}  // namespace otcrf
