#pragma once

// Dense numerical kernels shared by the recovery pipelines.

#include <Eigen/Dense>
#include <span>

#include "usfspec/signal_core.hpp"

namespace usfspec {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

CVector to_eigen(std::span<const cplx> v);
CVec to_std(const CVector& v);

/// N x M matrix with entries exp(-j 2 pi n m / N).
CMatrix vandermonde(std::size_t rows, std::size_t cols);
/// `rows` x `cols` block of the DFT matrix of size `grid`.
CMatrix vandermonde(std::size_t grid, std::size_t rows, std::size_t cols);

/// g_hat[m] = sum_n g[n] exp(-j 2 pi m n / N).
CVec dft(std::span<const cplx> g);

/// Polynomial with complex coefficients in ascending powers of z.
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(CVec ascending) : coeffs_(std::move(ascending)) {}

  /// Monic product of (z - r_k).
  static Polynomial from_roots(std::span<const cplx> roots);

  const CVec& coefficients() const { return coeffs_; }
  /// Degree after dropping leading coefficients below 1e-14 of the largest.
  int degree() const;
  bool is_zero() const;
  Polynomial trimmed() const;
  Polynomial derivative() const;
  /// Coefficients reversed: z^d p(1/z).
  Polynomial reversed() const;
  cplx operator()(cplx z) const;
  double l1_norm() const;

 private:
  CVec coeffs_;
};

/// Zeros of p as eigenvalues of its balanced companion matrix.
/// Throws ConfigError for the zero polynomial; constants have no roots.
CVec roots(const Polynomial& p);

/// Minimum-norm least-squares solution of A x = b.
CVector lstsq(const CMatrix& a, const CVector& b);

/// Result of min ||A h - B q||^2 subject to h0^H h = 1.
struct ConstrainedUpdate {
  CVector h;
  CVector q;
  double kappa = 0.0;      // Lagrange multiplier; equals the optimal objective
  double objective = 0.0;  // ||A h - B q||^2
  bool restart_needed = false;
};

/// Solves [h; -q] = kappa ([A, B]^H [A, B])^{-1} [h0; 0] by eliminating q
/// through a QR of B. A numerically singular projected normal matrix selects
/// the minimum-norm null-space solution meeting the constraint; a rank
/// deficient B or an h0 orthogonal to that null space sets restart_needed.
ConstrainedUpdate constrained_lstsq_update(const CMatrix& a, const CMatrix& b, const CVector& h0);

/// Same problem with B = I_blocks (x) b_block and A stacked from `a_blocks`
/// (each rows(b_block) x cols), avoiding the dense Kronecker product.
ConstrainedUpdate constrained_lstsq_update_blocked(std::span<const CMatrix> a_blocks,
                                                   const CMatrix& b_block, const CVector& h0);

}  // namespace usfspec
