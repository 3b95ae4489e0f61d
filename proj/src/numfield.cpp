#include "otcrf/numfield.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "otcrf/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace otcrf {

namespace {

using DPoly = std::vector<double>;  // constant-to-leading

double eval_d(const DPoly& p, double x) {
  double acc = 0.0;
  for (auto it = p.rbegin(); it != p.rend(); ++it) acc = acc * x + *it;
  return acc;
}

DPoly derivative(const DPoly& p) {
  DPoly d;
  for (std::size_t k = 1; k < p.size(); ++k) d.push_back(static_cast<double>(k) * p[k]);
  return d;
}

void trim(DPoly& p, double rel) {
  double scale = 0.0;
  for (double c : p) scale = std::max(scale, std::abs(c));
  while (p.size() > 1 && std::abs(p.back()) <= rel * scale) p.pop_back();
}

// Remainder of a / b (b nonzero leading coefficient).
DPoly remainder(DPoly a, const DPoly& b) {
  const std::size_t db = b.size() - 1;
  while (a.size() >= b.size()) {
    const double q = a.back() / b.back();
    const std::size_t shift = a.size() - b.size();
    for (std::size_t k = 0; k <= db; ++k) a[shift + k] -= q * b[k];
    a.pop_back();
  }
  if (a.empty()) a.push_back(0.0);
  trim(a, 1e-12);
  return a;
}

std::vector<DPoly> sturm_chain(const DPoly& f) {
  std::vector<DPoly> chain{f, derivative(f)};
  while (chain.back().size() > 1) {
    DPoly r = remainder(chain[chain.size() - 2], chain.back());
    for (double& c : r) c = -c;
    if (r.size() == 1 && r[0] == 0.0) break;
    // normalise to keep magnitudes tame
    double scale = 0.0;
    for (double c : r) scale = std::max(scale, std::abs(c));
    for (double& c : r) c /= scale;
    chain.push_back(std::move(r));
  }
  return chain;
}

int sign_changes(const std::vector<DPoly>& chain, double x) {
  int changes = 0;
  int prev = 0;
  for (const auto& p : chain) {
    const double v = eval_d(p, x);
    const int sg = (v > 0) - (v < 0);
    if (sg == 0) continue;
    if (prev != 0 && sg != prev) ++changes;
    prev = sg;
  }
  return changes;
}

DPoly to_double(const PolynomialSpec& poly) {
  return DPoly(poly.coeffs.begin(), poly.coeffs.end());
}

double cauchy_bound(const PolynomialSpec& poly) {
  double m = 0.0;
  for (std::size_t k = 0; k + 1 < poly.coeffs.size(); ++k)
    m = std::max(m, std::abs(static_cast<double>(poly.coeffs[k])));
  return 1.0 + m;
}

// Exact division check of a monic integer polynomial by a monic divisor.
bool divides(const std::vector<std::int64_t>& f, const std::vector<std::int64_t>& g) {
  std::vector<__int128> r(f.begin(), f.end());
  const std::size_t dg = g.size() - 1;
  for (std::size_t top = r.size() - 1; top >= dg; --top) {
    const __int128 q = r[top];
    if (q != 0) {
      for (std::size_t k = 0; k <= dg; ++k) r[top - dg + k] -= q * g[k];
    }
    if (top == dg) break;
  }
  for (std::size_t k = 0; k < dg; ++k)
    if (r[k] != 0) return false;
  return true;
}

std::vector<std::int64_t> divisors_signed(std::int64_t a) {
  std::vector<std::int64_t> out;
  const std::int64_t x = a < 0 ? -a : a;
  for (std::int64_t d = 1; d * d <= x; ++d) {
    if (x % d != 0) continue;
    out.push_back(d);
    out.push_back(-d);
    if (d != x / d) {
      out.push_back(x / d);
      out.push_back(-(x / d));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

double PolynomialSpec::eval(double x) const {
  double acc = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + static_cast<double>(*it);
  return acc;
}

Complex PolynomialSpec::eval(Complex z) const {
  Complex acc = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * z + static_cast<double>(*it);
  return acc;
}

void validate_polynomial(const PolynomialSpec& poly) {
  if (poly.coeffs.size() < 3)
    throw Error(ErrorCode::ParseError, "polynomial must have degree >= 2");
  if (poly.coeffs.back() != 1)
    throw Error(ErrorCode::ParseError, "polynomial must be monic (leading coefficient 1)");
}

std::optional<std::vector<std::int64_t>> find_small_factor(const PolynomialSpec& poly) {
  validate_polynomial(poly);
  const int n = poly.degree();
  if (poly.coeffs[0] == 0) return std::vector<std::int64_t>{0, 1};

  const double root_bound = cauchy_bound(poly);
  const auto consts = divisors_signed(poly.coeffs[0]);
  for (int d = 1; d <= n / 2; ++d) {
    // Coefficient box from |b_k| <= C(d,k) R^(d-k), capped for desk scale.
    std::vector<std::int64_t> box(d, 0);
    for (int k = 1; k < d; ++k)
      box[k] = static_cast<std::int64_t>(std::min(24.0, std::floor(binom(d, k) * std::pow(root_bound, d - k))));
    std::vector<std::int64_t> g(d + 1, 0);
    g[d] = 1;
    for (std::int64_t c0 : consts) {
      g[0] = c0;
      // odometer over g[1..d-1]
      for (int k = 1; k < d; ++k) g[k] = -box[k];
      while (true) {
        if (divides(poly.coeffs, g)) return g;
        int k = 1;
        while (k < d && g[k] == box[k]) {
          g[k] = -box[k];
          ++k;
        }
        if (k >= d) break;
        ++g[k];
      }
    }
  }
  return std::nullopt;
}

Signature classify_signature(const PolynomialSpec& poly) {
  validate_polynomial(poly);
  if (auto factor = find_small_factor(poly)) {
    throw Error(ErrorCode::NotIrreducible,
                fmt::format("polynomial {} has the factor {} (constant-to-leading)", poly.coeffs, *factor));
  }
  const auto chain = sturm_chain(to_double(poly));
  const double b = cauchy_bound(poly);
  const int s = sign_changes(chain, -b) - sign_changes(chain, b);
  const int n = poly.degree();
  if (s < 0 || (n - s) % 2 != 0)
    throw Error(ErrorCode::RootFindingFailed, "inconsistent real root count from Sturm sequence");
  return {s, (n - s) / 2};
}

EmbeddingSet compute_embeddings(const PolynomialSpec& poly, double tol) {
  const Signature sig = classify_signature(poly);
  if (sig.t > 1)
    throw Error(ErrorCode::DegenerateSignature,
                fmt::format("only fields with one complex place are supported (t = {})", sig.t));

  EmbeddingSet emb;
  emb.poly = poly;
  emb.t = sig.t;
  emb.tolerance = tol;

  const DPoly f = to_double(poly);
  const auto chain = sturm_chain(f);
  const double bound = cauchy_bound(poly);

  // Isolate.
  struct Interval {
    double lo, hi;
    int count;
  };
  std::vector<Interval> work{{-bound, bound, sig.s}};
  std::vector<Interval> isolated;
  int guard = 0;
  while (!work.empty()) {
    if (++guard > 100000) throw Error(ErrorCode::RootFindingFailed, "real root isolation did not terminate");
    Interval iv = work.back();
    work.pop_back();
    if (iv.count == 0) continue;
    if (iv.count == 1) {
      isolated.push_back(iv);
      continue;
    }
    const double mid = 0.5 * (iv.lo + iv.hi);
    const int cl = sign_changes(chain, iv.lo) - sign_changes(chain, mid);
    const int cr = sign_changes(chain, mid) - sign_changes(chain, iv.hi);
    work.push_back({iv.lo, mid, cl});
    work.push_back({mid, iv.hi, cr});
  }

  // Refine each by bisection on the sign of f. Sturm counts roots in (lo, hi].
  for (const auto& iv : isolated) {
    double lo = iv.lo, hi = iv.hi;
    double flo = eval_d(f, lo), fhi = eval_d(f, hi);
    if (fhi == 0.0) {
      emb.real_roots.push_back(hi);
      continue;
    }
    if (flo == 0.0) {  // root at lo belongs to the neighbouring interval; nudge
      lo = std::nextafter(lo, hi);
      flo = eval_d(f, lo);
    }
    if ((flo > 0) == (fhi > 0))
      throw Error(ErrorCode::RootFindingFailed, "isolated interval without sign change");
    for (int it = 0; it < 400 && hi - lo > 0.0; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      const double fm = eval_d(f, mid);
      if (fm == 0.0) {
        lo = hi = mid;
        break;
      }
      if ((fm > 0) == (flo > 0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    emb.real_roots.push_back(std::abs(eval_d(f, lo)) <= std::abs(eval_d(f, hi)) ? lo : hi);
  }
  std::sort(emb.real_roots.begin(), emb.real_roots.end());

  for (double r : emb.real_roots) {
    if (std::abs(eval_d(f, r)) >= tol)
      throw Error(ErrorCode::RootFindingFailed, fmt::format("real root {} has residual {}", r, eval_d(f, r)));
  }

  if (sig.t == 1) {
    // Deflate the real roots; what remains is the quadratic of the conjugate pair.
    DPoly q = f;
    for (double r : emb.real_roots) {
      DPoly out(q.size() - 1);
      double carry = q.back();
      for (std::size_t k = q.size() - 1; k-- > 0;) {
        out[k] = carry;
        carry = q[k] + carry * r;
      }
      q = std::move(out);
    }
    const double b = q[1] / q[2], c = q[0] / q[2];
    Complex z(-0.5 * b, std::sqrt(std::max(0.0, c - 0.25 * b * b)));
    if (z.imag() <= 0.0) z = Complex(z.real(), 1.0);

    // Damped Newton on the undeflated polynomial.
    const DPoly fd = derivative(f);
    auto fc = [&](Complex x) {
      Complex acc = 0.0;
      for (auto it = f.rbegin(); it != f.rend(); ++it) acc = acc * x + *it;
      return acc;
    };
    auto dfc = [&](Complex x) {
      Complex acc = 0.0;
      for (auto it = fd.rbegin(); it != fd.rend(); ++it) acc = acc * x + *it;
      return acc;
    };
    bool converged = std::abs(fc(z)) < 1e-3 * tol;
    for (int it = 0; it < 100000 && !converged; ++it) {
      const Complex fz = fc(z);
      const Complex dz = dfc(z);
      if (std::abs(dz) == 0.0) break;
      const Complex step = fz / dz;
      double lambda = 1.0;
      Complex next = z - step;
      while (std::abs(fc(next)) > std::abs(fz) && lambda > 1e-6) {
        lambda *= 0.5;
        next = z - lambda * step;
      }
      if (std::abs(next - z) <= 1e-17 * std::max(1.0, std::abs(z))) {
        z = next;
        converged = std::abs(fc(z)) < tol;
        break;
      }
      z = next;
      if (std::abs(fc(z)) < 1e-3 * tol) converged = true;
    }
    if (!converged || std::abs(fc(z)) >= tol)
      throw Error(ErrorCode::RootFindingFailed, "complex Newton iteration did not converge");
    if (z.imag() < 0.0) z = std::conj(z);
    if (z.imag() <= tol)
      throw Error(ErrorCode::RootFindingFailed, "complex iteration collapsed onto the real axis");
    emb.complex_rep = z;
  }
  return emb;
}

bool AlgebraicInteger::is_zero() const {
  return std::all_of(coords.begin(), coords.end(), [](std::int64_t c) { return c == 0; });
}

EmbeddingValues embed(const AlgebraicInteger& a, const EmbeddingSet& emb) {
  EmbeddingValues v;
  v.real.reserve(emb.real_roots.size());
  for (double r : emb.real_roots) {
    double acc = 0.0;
    for (auto it = a.coords.rbegin(); it != a.coords.rend(); ++it) acc = acc * r + static_cast<double>(*it);
    v.real.push_back(acc);
  }
  if (emb.t == 1) {
    Complex acc = 0.0;
    for (auto it = a.coords.rbegin(); it != a.coords.rend(); ++it) acc = acc * emb.complex_rep + static_cast<double>(*it);
    v.complex = acc;
  }
  return v;
}

namespace {

double norm_product(const EmbeddingValues& v, int t) {
  double p = 1.0;
  for (double x : v.real) p *= x;
  if (t == 1) p *= std::norm(v.complex);
  return p;
}

}  // namespace

std::int64_t field_norm(const AlgebraicInteger& a, const EmbeddingSet& emb) {
  const double p = norm_product(embed(a, emb), emb.t);
  const double r = std::round(p);
  if (std::abs(p - r) > 1e-6)
    throw Error(ErrorCode::NormNotIntegral, fmt::format("norm {} is not within 1e-6 of an integer", p));
  return static_cast<std::int64_t>(r);
}

AlgebraicInteger multiply(const AlgebraicInteger& a, const AlgebraicInteger& b, const PolynomialSpec& poly) {
  const int n = poly.degree();
  std::vector<std::int64_t> prod(2 * n - 1, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) prod[i + j] += a.coords[i] * b.coords[j];
  for (int k = 2 * n - 2; k >= n; --k) {
    const std::int64_t c = prod[k];
    if (c == 0) continue;
    for (int i = 0; i < n; ++i) prod[k - n + i] -= c * poly.coeffs[i];
    prod[k] = 0;
  }
  prod.resize(n);
  return {prod};
}

UnitElement make_unit(const AlgebraicInteger& a, const EmbeddingSet& emb) {
  UnitElement u;
  u.element = a;
  u.element.coords.resize(emb.n(), 0);
  u.values = embed(u.element, emb);
  u.norm = field_norm(u.element, emb);
  if (u.norm != 1 && u.norm != -1)
    throw Error(ErrorCode::NotAUnit, fmt::format("element {} has norm {}", u.element.coords, u.norm));
  u.totally_positive = std::all_of(u.values.real.begin(), u.values.real.end(), [](double x) { return x > 0.0; });
  return u;
}

std::vector<UnitElement> enumerate_units(const EmbeddingSet& emb, int coeff_bound) {
  const int n = emb.n();
  const int width = 2 * coeff_bound + 1;
  std::int64_t inner = 1;
  for (int k = 0; k + 1 < n; ++k) inner *= width;

  std::vector<std::vector<UnitElement>> slices(width);
#pragma omp parallel for schedule(dynamic)
  for (int top = 0; top < width; ++top) {
    AlgebraicInteger a{std::vector<std::int64_t>(n, 0)};
    a.coords[n - 1] = top - coeff_bound;
    for (std::int64_t idx = 0; idx < inner; ++idx) {
      std::int64_t rest = idx;
      for (int k = n - 2; k >= 0; --k) {
        a.coords[k] = rest % width - coeff_bound;
        rest /= width;
      }
      if (a.is_zero()) continue;
      const EmbeddingValues v = embed(a, emb);
      const double p = norm_product(v, emb.t);
      const double r = std::round(p);
      if (std::abs(r) != 1.0 || std::abs(p - r) > 1e-6) continue;
      UnitElement u;
      u.element = a;
      u.values = v;
      u.norm = static_cast<std::int64_t>(r);
      u.totally_positive = std::all_of(v.real.begin(), v.real.end(), [](double x) { return x > 0.0; });
      slices[top].push_back(std::move(u));
    }
  }
  std::vector<UnitElement> out;
  for (auto& s : slices)
    for (auto& u : s) out.push_back(std::move(u));
  std::sort(out.begin(), out.end(), [](const UnitElement& x, const UnitElement& y) {
    return x.element.coords < y.element.coords;
  });
  return out;
}

Vec log_embedding(const UnitElement& u) {
  if (!u.totally_positive)
    throw Error(ErrorCode::NotTotallyPositive,
                fmt::format("unit {} is not totally positive", u.element.coords));
  const int s = static_cast<int>(u.values.real.size());
  const bool has_complex = u.values.complex != Complex(0.0);
  Vec comps(s + (has_complex ? 1 : 0));
  for (int i = 0; i < s; ++i) comps[i] = std::log(u.values.real[i]);
  if (has_complex) comps[s] = 2.0 * std::log(std::abs(u.values.complex));
  return comps;
}

AdmissibilityResult check_admissible(const std::vector<UnitElement>& units, const EmbeddingSet& emb) {
  const int s = emb.s();
  AdmissibilityResult res;
  res.V = Mat::Zero(static_cast<Eigen::Index>(units.size()), s);
  for (std::size_t k = 0; k < units.size(); ++k) {
    const Vec l = log_embedding(units[k]);
    res.V.row(static_cast<Eigen::Index>(k)) = l.head(s).transpose();
  }
  if (s == 0 || static_cast<int>(units.size()) != s) return res;
  Mat normalised = res.V;
  for (Eigen::Index k = 0; k < normalised.rows(); ++k) {
    const double nrm = normalised.row(k).norm();
    if (nrm > 0.0) normalised.row(k) /= nrm;
  }
  res.det = normalised.determinant();
  res.admissible = std::abs(res.det) > 1e-8;
  return res;
}

OTStructure OTStructure::from_lattice(const Mat& V, double c) {
  OTStructure ot;
  ot.s = static_cast<int>(V.rows());
  ot.t = 1;
  ot.m = ot.s + 1;
  ot.n = ot.m + 1;
  ot.V = V;
  ot.torus_gram = 0.5 * V * V.transpose();
  ot.c = c;
  return ot;
}

OTStructure build_ot_structure(const PolynomialSpec& poly, const std::vector<AlgebraicInteger>& generators,
                               double c) {
  const Signature sig = classify_signature(poly);
  if (sig.s == 0 || sig.t == 0)
    throw Error(ErrorCode::DegenerateSignature,
                fmt::format("OT construction needs s >= 1 and t = 1, got s = {}, t = {}", sig.s, sig.t));
  if (sig.t != 1)
    throw Error(ErrorCode::DegenerateSignature,
                fmt::format("only t = 1 is supported, got t = {}", sig.t));
  if (!(c > 0.0)) throw Error(ErrorCode::ConfigError, "leaf constant c must be positive");

  const EmbeddingSet emb = compute_embeddings(poly);
  std::vector<UnitElement> units;
  for (const auto& g : generators) {
    if (static_cast<int>(g.coords.size()) > emb.n())
      throw Error(ErrorCode::ParseError, fmt::format("generator {} has more than n = {} coordinates", g.coords, emb.n()));
    units.push_back(make_unit(g, emb));
    if (!units.back().totally_positive)
      throw Error(ErrorCode::NotTotallyPositive,
                  fmt::format("generator {} is not totally positive", units.back().element.coords));
  }
  const AdmissibilityResult adm = check_admissible(units, emb);
  if (!adm.admissible)
    throw Error(ErrorCode::InadmissibleGroup,
                fmt::format("generators do not span a full lattice in R^{} (need {} generators, got {}, det = {})",
                            sig.s, sig.s, units.size(), adm.det));

  OTStructure ot = OTStructure::from_lattice(adm.V, c);
  ot.poly = poly;
  ot.emb = emb;
  ot.generators = std::move(units);
  return ot;
}

Vec torus_radii(const OTStructure& ot) {
  const double k = 1.0 / (2.0 * std::sqrt(2.0) * M_PI);
  Vec r(ot.V.rows());
  for (Eigen::Index i = 0; i < ot.V.rows(); ++i) r[i] = k * ot.V.row(i).norm();
  return r;
}

double torus_distance(const Vec& a, const Vec& b, const OTStructure& ot, int shift_range) {
  const Eigen::Index d = ot.V.rows();
  const Vec diff = a - b;
  std::vector<int> k(d, -shift_range);
  double best = std::numeric_limits<double>::infinity();
  Vec xi(d);
  while (true) {
    for (Eigen::Index i = 0; i < d; ++i) xi[i] = diff[i] + k[i];
    const Vec u = ot.V.transpose() * xi;
    best = std::min(best, std::sqrt(0.5 * u.squaredNorm()));
    Eigen::Index i = 0;
    while (i < d && k[i] == shift_range) {
      k[i] = -shift_range;
      ++i;
    }
    if (i == d) break;
    ++k[i];
  }
  return best;
}

namespace {

struct Candidate {
  double leaf_cost = std::numeric_limits<double>::infinity();
  std::int64_t max_coord = 0;
  std::vector<std::int64_t> coords;

  bool valid() const { return !coords.empty(); }
};

bool better(const Candidate& a, const Candidate& b) {
  if (!b.valid()) return a.valid();
  if (!a.valid()) return false;
  if (a.leaf_cost != b.leaf_cost) return a.leaf_cost < b.leaf_cost;
  if (a.max_coord != b.max_coord) return a.max_coord < b.max_coord;
  return a.coords < b.coords;
}

std::int64_t max_abs(const std::vector<std::int64_t>& v) {
  std::int64_t m = 0;
  for (auto x : v) m = std::max<std::int64_t>(m, x < 0 ? -x : x);
  return m;
}

std::optional<LatticeApproximation> finish(const Candidate& best, const std::vector<double>& targets,
                                           const EmbeddingSet& emb) {
  if (!best.valid()) return std::nullopt;
  LatticeApproximation out;
  out.element.coords = best.coords;
  const EmbeddingValues v = embed(out.element, emb);
  out.sigma.assign(v.real.begin(), v.real.begin() + static_cast<long>(targets.size()));
  out.leaf_cost = std::abs(v.complex);
  for (std::size_t i = 0; i < targets.size(); ++i)
    out.max_error = std::max(out.max_error, std::abs(out.sigma[i] - targets[i]));
  return out;
}

void check_targets(const std::vector<double>& targets, double delta, const EmbeddingSet& emb) {
  if (!(delta > 0.0)) throw Error(ErrorCode::ConfigError, "delta must be positive");
  if (static_cast<int>(targets.size()) != emb.s())
    throw Error(ErrorCode::ConfigError,
                fmt::format("expected {} targets (one per real place), got {}", emb.s(), targets.size()));
}

}  // namespace

std::optional<LatticeApproximation> lattice_approximate_serial(const std::vector<double>& targets, double delta,
                                                               int coeff_bound, const EmbeddingSet& emb) {
  check_targets(targets, delta, emb);
  const int n = emb.n();
  const int s = emb.s();
  std::vector<std::int64_t> c(n, -coeff_bound);
  Candidate best;
  while (true) {
    AlgebraicInteger a{c};
    const EmbeddingValues v = embed(a, emb);
    bool inside = true;
    for (int i = 0; i < s && inside; ++i) inside = std::abs(v.real[i] - targets[i]) < delta;
    if (inside) {
      Candidate cand{std::abs(v.complex), max_abs(c), c};
      if (better(cand, best)) best = cand;
    }
    int k = 0;
    while (k < n && c[k] == coeff_bound) {
      c[k] = -coeff_bound;
      ++k;
    }
    if (k == n) break;
    ++c[k];
  }
  return finish(best, targets, emb);
}

std::optional<LatticeApproximation> lattice_approximate(const std::vector<double>& targets, double delta,
                                                        int coeff_bound, const EmbeddingSet& emb) {
  check_targets(targets, delta, emb);
  const int n = emb.n();
  const int s = emb.s();
  const int width = 2 * coeff_bound + 1;

  // sigma_i(a) = c_0 + sum_{k>=1} c_k r_i^k, so for fixed c_1..c_{n-1} the
  // admissible c_0 form a short integer interval.
  std::vector<std::vector<double>> rpow(s, std::vector<double>(n, 1.0));
  std::vector<Complex> cpow(n, 1.0);
  for (int i = 0; i < s; ++i)
    for (int k = 1; k < n; ++k) rpow[i][k] = rpow[i][k - 1] * emb.real_roots[i];
  for (int k = 1; k < n; ++k) cpow[k] = cpow[k - 1] * emb.complex_rep;

  std::int64_t inner = 1;
  for (int k = 1; k + 1 < n; ++k) inner *= width;

  std::vector<Candidate> per_top(width);
#pragma omp parallel for schedule(dynamic)
  for (int top = 0; top < width; ++top) {
    std::vector<std::int64_t> c(n, 0);
    c[n - 1] = top - coeff_bound;
    Candidate best;
    for (std::int64_t idx = 0; idx < inner; ++idx) {
      std::int64_t rest = idx;
      for (int k = n - 2; k >= 1; --k) {
        c[k] = rest % width - coeff_bound;
        rest /= width;
      }
      double lo = -static_cast<double>(coeff_bound), hi = static_cast<double>(coeff_bound);
      for (int i = 0; i < s; ++i) {
        double base = 0.0;
        for (int k = 1; k < n; ++k) base += static_cast<double>(c[k]) * rpow[i][k];
        lo = std::max(lo, targets[i] - base - delta);
        hi = std::min(hi, targets[i] - base + delta);
      }
      if (lo > hi) continue;
      for (auto c0 = static_cast<std::int64_t>(std::floor(lo)); c0 <= static_cast<std::int64_t>(std::ceil(hi)); ++c0) {
        if (c0 < -coeff_bound || c0 > coeff_bound) continue;
        c[0] = c0;
        bool inside = true;
        for (int i = 0; i < s && inside; ++i) {
          double sig = 0.0;
          for (int k = n - 1; k >= 0; --k) sig = sig * emb.real_roots[i] + static_cast<double>(c[k]);
          inside = std::abs(sig - targets[i]) < delta;
        }
        if (!inside) continue;
        Complex z = 0.0;
        for (int k = n - 1; k >= 0; --k) z = z * emb.complex_rep + static_cast<double>(c[k]);
        Candidate cand{std::abs(z), max_abs(c), c};
        if (better(cand, best)) best = std::move(cand);
      }
    }
    per_top[top] = std::move(best);
  }
  Candidate best;
  for (auto& cand : per_top)
    if (better(cand, best)) best = cand;
  return finish(best, targets, emb);
}

// ---------------------------------------------------------------------------

namespace {

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

nlohmann::json parse_value(const std::string& value, const std::string& where) {
  try {
    return nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, fmt::format("{}: cannot parse value '{}': {}", where, value, e.what()));
  }
}

}  // namespace

FieldDefinition parse_field_definition(std::istream& in, const std::string& source) {
  FieldDefinition def;
  bool have_poly = false, have_gens = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = fmt::format("{}:{}", source, lineno);
    if (eq == std::string::npos) throw Error(ErrorCode::ParseError, where + ": expected key = value");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    try {
      if (key == "poly") {
        def.poly.coeffs = parse_value(value, where).get<std::vector<std::int64_t>>();
        have_poly = true;
      } else if (key == "generators") {
        for (const auto& g : parse_value(value, where))
          def.generators.push_back({g.get<std::vector<std::int64_t>>()});
        have_gens = true;
      } else if (key == "coeff_bound") {
        def.coeff_bound = parse_value(value, where).get<int>();
        if (def.coeff_bound < 1) throw Error(ErrorCode::ParseError, where + ": coeff_bound must be >= 1");
      } else if (key == "c") {
        def.c = parse_value(value, where).get<double>();
      } else if (key == "name") {
        def.name = value;
      } else {
        throw Error(ErrorCode::ParseError, fmt::format("{}: unknown key '{}'", where, key));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, fmt::format("{}: bad value for '{}': {}", where, key, e.what()));
    }
  }
  if (!have_poly) throw Error(ErrorCode::ParseError, source + ": missing 'poly'");
  if (!have_gens) throw Error(ErrorCode::ParseError, source + ": missing 'generators'");
  try {
    validate_polynomial(def.poly);
  } catch (const Error& e) {
    throw Error(e.code(), source + ": " + e.what());
  }
  for (auto& g : def.generators) {
    if (static_cast<int>(g.coords.size()) > def.poly.degree())
      throw Error(ErrorCode::ParseError, source + ": generator has more coordinates than the field degree");
    g.coords.resize(def.poly.degree(), 0);
  }
  return def;
}

FieldDefinition load_field_definition(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot open field file " + path);
  return parse_field_definition(in, path);
}

namespace {

std::string vec_str(const std::vector<double>& v) { return fmt::format("[{}]", fmt::join(v, ", ")); }

std::string vec_str(const Vec& v) { return vec_str(std::vector<double>(v.data(), v.data() + v.size())); }

std::string mat_str(const Mat& m) {
  std::vector<std::string> rows;
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_str(Vec(m.row(i).transpose())));
  return fmt::format("[{}]", fmt::join(rows, ", "));
}

}  // namespace

void write_structure_report(std::ostream& out, const OTStructure& ot, const std::vector<UnitElement>& units,
                            int coeff_bound, const std::string& name) {
  out << "# otcrf structure report v1\n";
  out << "name = " << name << "\n";
  out << "order = power order Z[lambda]\n";
  out << fmt::format("poly = [{}]\n", fmt::join(ot.poly.coeffs, ", "));
  out << fmt::format("s = {}\nt = {}\nm = {}\nn = {}\n", ot.s, ot.t, ot.m, ot.n);
  out << fmt::format("c = {}\n", ot.c);
  out << "real_roots = " << vec_str(ot.emb.real_roots) << "\n";
  out << fmt::format("complex_root = [{}, {}]\n", ot.emb.complex_rep.real(), ot.emb.complex_rep.imag());
  std::vector<std::string> gens, norms;
  for (const auto& g : ot.generators) {
    gens.push_back(fmt::format("[{}]", fmt::join(g.element.coords, ", ")));
    norms.push_back(fmt::format("{}", g.norm));
  }
  out << fmt::format("generators = [{}]\n", fmt::join(gens, ", "));
  out << fmt::format("generator_norms = [{}]\n", fmt::join(norms, ", "));
  out << "V = " << mat_str(ot.V) << "\n";
  out << fmt::format("det_V = {}\n", ot.V.determinant());
  out << "gram = " << mat_str(ot.torus_gram) << "\n";
  out << "radii = " << vec_str(torus_radii(ot)) << "\n";
  out << fmt::format("coeff_bound = {}\n", coeff_bound);
  out << fmt::format("units_found = {}\n", units.size());
  for (const auto& u : units) {
    out << fmt::format("unit = [{}] norm={} totally_positive={}", fmt::join(u.element.coords, ", "), u.norm,
                       u.totally_positive ? 1 : 0);
    if (u.totally_positive) out << " log=" << vec_str(log_embedding(u));
    out << "\n";
  }
}

OTStructure read_structure_report(std::istream& in, const std::string& source) {
  std::string line;
  int lineno = 0;
  PolynomialSpec poly;
  std::vector<AlgebraicInteger> gens;
  double c = 1.0;
  Mat V;
  bool have_poly = false, have_gens = false, have_v = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    const std::string where = fmt::format("{}:{}", source, lineno);
    if (key == "poly") {
      poly.coeffs = parse_value(value, where).get<std::vector<std::int64_t>>();
      have_poly = true;
    } else if (key == "generators") {
      for (const auto& g : parse_value(value, where)) gens.push_back({g.get<std::vector<std::int64_t>>()});
      have_gens = true;
    } else if (key == "c") {
      c = parse_value(value, where).get<double>();
    } else if (key == "V") {
      const auto rows = parse_value(value, where).get<std::vector<std::vector<double>>>();
      V.resize(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) V(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
      have_v = true;
    }
  }
  if (!have_poly || !have_gens || !have_v)
    throw Error(ErrorCode::ParseError, source + ": structure report lacks poly, generators or V");
  OTStructure ot = build_ot_structure(poly, gens, c);
  if (ot.V.rows() != V.rows() || ot.V.cols() != V.cols() || (ot.V - V).cwiseAbs().maxCoeff() > 1e-12)
    throw Error(ErrorCode::ParseError, source + ": recorded lattice V does not match the rebuilt structure");
  return ot;
}

}  // namespace otcrf
