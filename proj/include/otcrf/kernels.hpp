#pragma once

// Per-point grid kernels of the reduced Monge-Ampere flow. Each kernel has a
// serial reference and an OpenMP version; both write one value per grid point
// and leave reductions to the caller, so their outputs are bit-identical.

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace otcrf {

/// Uniform periodic grid on [0,1)^d in lattice coordinates xi, u = V^T xi.
struct Grid {
  int d = 0;
  int N = 0;
  std::size_t size = 0;
  double h = 0.0;
  Eigen::MatrixXd V;  // d x d lattice basis (rows = generators)
  Eigen::MatrixXd W;  // V^{-1}: grad_u = W grad_xi
  std::vector<std::uint32_t> plus;   // plus[a * size + p]: neighbour +e_a
  std::vector<std::uint32_t> minus;  // minus[a * size + p]: neighbour -e_a
  // For each pair b < a (in row-major pair order), 4 * size diagonal
  // neighbours: +e_a+e_b, +e_a-e_b, -e_a+e_b, -e_a-e_b.
  std::vector<std::uint32_t> diag;

  Grid() = default;
  Grid(const Eigen::MatrixXd& V, int N);

  Eigen::VectorXd xi(std::size_t p) const;
  std::size_t index(const std::vector<int>& coords) const;  // wraps periodically
  std::vector<int> coords(std::size_t p) const;
  std::uint32_t step(std::size_t p, int axis, int offset) const;
};

struct KernelInput {
  const Grid* grid = nullptr;
  const double* psi = nullptr;  // zero-mean part of phi; constants do not enter K
  const double* lf = nullptr;  // size * d * d normalised base block of omega_LF
  bool lf_uniform = false;     // lf is the same block at every point
  double t = 0.0;
};

/// log det K split as log det Kref + log det(I + Kref^{-1} Hhat) so that the
/// second part keeps full relative precision while Hhat is small.
struct KernelOutput {
  double* logdet_ref = nullptr;
  double* logdet_rel = nullptr;
  double* lam_min = nullptr;  // smallest eigenvalue of K, NaN where K is not positive
};

/// K = Kref + Hhat(psi) with Kref = e^{-t} M_LF + (1 - e^{-t}) I; the flow
/// velocity is logdet_ref + logdet_rel - phi.
void ma_rhs_serial(const KernelInput& in, const KernelOutput& out);
void ma_rhs_omp(const KernelInput& in, const KernelOutput& out);

/// Normalised Hessian Hhat_{ij} = d_{u_i} d_{u_j} f - delta_ij d_{u_i} f at
/// every point, stored as size * d * d.
void hessian_field_serial(const Grid& grid, const double* f, double* out);
void hessian_field_omp(const Grid& grid, const double* f, double* out);

/// Hhat at one point (d x d), second-order central differences.
Eigen::MatrixXd hessian_at(const Grid& grid, const double* f, std::size_t p);

/// log det(I + A) for a small d x d matrix A, accurate when A is tiny.
double log_det_one_plus(const Eigen::MatrixXd& A);

/// Gradient in u at one point.
Eigen::VectorXd gradient_at(const Grid& grid, const double* f, std::size_t p);

}  // namespace otcrf
