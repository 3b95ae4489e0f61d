#pragma once

// Number-field side of the Oeljeklaus-Toma construction: embeddings of a
// monic integer polynomial's root, unit search in the power order Z[lambda],
// logarithmic lattice, admissibility, the flat metric on the base torus and
// the box search used to translate along dense leaves.

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace otcrf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Complex = std::complex<double>;

/// Monic integer polynomial, coefficients ordered constant-to-leading.
struct PolynomialSpec {
  std::vector<std::int64_t> coeffs;

  int degree() const { return static_cast<int>(coeffs.size()) - 1; }
  double eval(double x) const;
  Complex eval(Complex z) const;
};

/// Throws ParseError unless the polynomial is monic of degree >= 2.
void validate_polynomial(const PolynomialSpec& poly);

struct Signature {
  int s = 0;  // real places
  int t = 0;  // complex places
};

/// Counts real roots with a Sturm sequence. Throws NotIrreducible when a
/// rational root or a small integer factor is found (best effort).
Signature classify_signature(const PolynomialSpec& poly);

/// Trial factorisation by monic integer polynomials of degree <= n/2 whose
/// coefficients lie in a bounded box. Returns the factor if one is found.
std::optional<std::vector<std::int64_t>> find_small_factor(const PolynomialSpec& poly);

struct EmbeddingSet {
  PolynomialSpec poly;
  std::vector<double> real_roots;  // ascending
  Complex complex_rep;             // Im > 0; meaningful only when t == 1
  int t = 0;
  double tolerance = 1e-10;

  int s() const { return static_cast<int>(real_roots.size()); }
  int n() const { return s() + 2 * t; }
};

/// Bisection on Sturm-isolated intervals for the real roots, deflation and a
/// damped complex Newton iteration for the conjugate pair. Only t <= 1 is
/// supported.
EmbeddingSet compute_embeddings(const PolynomialSpec& poly, double tol = 1e-10);

/// Element of Z[lambda] in the power basis 1, lambda, ..., lambda^{n-1}.
struct AlgebraicInteger {
  std::vector<std::int64_t> coords;

  bool is_zero() const;
  friend bool operator==(const AlgebraicInteger&, const AlgebraicInteger&) = default;
};

/// Values sigma_1(a), ..., sigma_s(a) followed by sigma_{s+1}(a).
struct EmbeddingValues {
  std::vector<double> real;
  Complex complex = 0.0;
};

EmbeddingValues embed(const AlgebraicInteger& a, const EmbeddingSet& emb);

/// Product over all n embeddings, rounded. Throws NormNotIntegral when the
/// rounding error exceeds 1e-6.
std::int64_t field_norm(const AlgebraicInteger& a, const EmbeddingSet& emb);

/// Product in Z[lambda] reduced modulo the defining polynomial.
AlgebraicInteger multiply(const AlgebraicInteger& a, const AlgebraicInteger& b,
                          const PolynomialSpec& poly);

struct UnitElement {
  AlgebraicInteger element;
  EmbeddingValues values;
  std::int64_t norm = 0;
  bool totally_positive = false;
};

/// Wraps an element known to be a unit. Throws NotAUnit otherwise.
UnitElement make_unit(const AlgebraicInteger& a, const EmbeddingSet& emb);

/// All nonzero elements of the coefficient box [-bound, bound]^n with norm
/// +-1, sorted by coordinate vector.
std::vector<UnitElement> enumerate_units(const EmbeddingSet& emb, int coeff_bound);

/// (log sigma_1, ..., log sigma_s, 2 log |sigma_{s+1}|); sums to zero.
Vec log_embedding(const UnitElement& u);

struct AdmissibilityResult {
  bool admissible = false;
  Mat V;               // rows Pr(L(u_k))
  double det = 0.0;    // determinant after row normalisation
};

AdmissibilityResult check_admissible(const std::vector<UnitElement>& units,
                                     const EmbeddingSet& emb);

struct OTStructure {
  PolynomialSpec poly;
  EmbeddingSet emb;
  int s = 0, t = 1, m = 0, n = 0;
  std::vector<UnitElement> generators;
  Mat V;           // s x (m-1) log lattice basis, one row per generator
  Mat torus_gram;  // 1/2 V V^T
  double c = 1.0;  // strong-flatness constant of the leaf metric

  /// Synthetic structure built from a lattice basis alone (no field data).
  static OTStructure from_lattice(const Mat& V, double c = 1.0);
};

OTStructure build_ot_structure(const PolynomialSpec& poly,
                               const std::vector<AlgebraicInteger>& generators,
                               double c = 1.0);

/// k-th entry (1/(2 sqrt 2 pi)) |row_k(V)|.
Vec torus_radii(const OTStructure& ot);

/// Flat distance on R^{m-1}/Lambda between points given in lattice
/// coordinates; lattice shifts are searched in {-shift_range..shift_range}.
double torus_distance(const Vec& a, const Vec& b, const OTStructure& ot, int shift_range = 2);

struct LatticeApproximation {
  AlgebraicInteger element;
  std::vector<double> sigma;  // first m-1 real embeddings
  double leaf_cost = 0.0;     // |sigma_m(a)|
  double max_error = 0.0;     // max_i |sigma_i(a) - target_i|
};

/// Exhaustive box search for a with |sigma_i(a) - target_i| < delta for all
/// real places, minimising |sigma_m(a)|. Ties go to the smaller max-coordinate
/// and then to the lexicographically smaller coordinate vector.
std::optional<LatticeApproximation> lattice_approximate(const std::vector<double>& targets,
                                                        double delta, int coeff_bound,
                                                        const EmbeddingSet& emb);

/// Serial reference of the same search, used by tests and the benchmark.
std::optional<LatticeApproximation> lattice_approximate_serial(const std::vector<double>& targets,
                                                               double delta, int coeff_bound,
                                                               const EmbeddingSet& emb);

// ---------------------------------------------------------------------------
// Field definition files and structure reports.

struct FieldDefinition {
  std::string name;
  PolynomialSpec poly;
  std::vector<AlgebraicInteger> generators;
  int coeff_bound = 2;
  double c = 1.0;
};

/// key = value lines: poly, generators, coeff_bound, optional name and c.
FieldDefinition parse_field_definition(std::istream& in, const std::string& source = "<input>");
FieldDefinition load_field_definition(const std::string& path);

/// Flat text report: roots, units in the box, V, Gram matrix and radii.
void write_structure_report(std::ostream& out, const OTStructure& ot,
                            const std::vector<UnitElement>& units, int coeff_bound,
                            const std::string& name);

/// Reads back the parts of a report the other stages consume.
OTStructure read_structure_report(std::istream& in, const std::string& source = "<report>");

}  // namespace otcrf
