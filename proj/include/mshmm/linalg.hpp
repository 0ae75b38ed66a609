#pragma once

// Dense symmetric kernels used by the penalty algebra and the smoothing
// parameter update.

#include <Eigen/Dense>

namespace mshmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

inline constexpr double kDefaultRankTol = 1e-8;
inline constexpr double kDefaultPdEps = 1e-8;

/// Dense symmetric matrix. Construction checks finiteness and symmetry to a
/// relative tolerance of 1e-12 and then stores the exactly symmetrized part.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Matrix& m);

  /// (m + m^T)/2 without a symmetry check, e.g. for finite-difference Hessians.
  static SymMatrix symmetrized(const Matrix& m);
  static SymMatrix identity(Index n);
  static SymMatrix zero(Index n);
  static SymMatrix diagonal(const Vector& d);

  Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }

  SymMatrix operator+(const SymMatrix& o) const;
  SymMatrix operator-(const SymMatrix& o) const;
  SymMatrix operator*(double c) const;

 private:
  Matrix m_;
};

/// Eigenvalues sorted descending with matching orthonormal eigenvectors.
struct EigenFactorization {
  Vector eigenvalues;
  Matrix eigenvectors;
};

EigenFactorization eigen_sym(const SymMatrix& a);

/// Number of eigenvalues above rank_tol * lambda_max.
Index numerical_rank(const SymMatrix& a, double rank_tol = kDefaultRankTol);

/// Moore-Penrose inverse of a PSD matrix. Eigenvalues at or below
/// rank_tol * lambda_max (including small negative ones) map to zero.
SymMatrix pseudo_inverse(const SymMatrix& a, double rank_tol = kDefaultRankTol);

/// Log of the product of eigenvalues above rank_tol * lambda_max.
/// Throws DegeneratePenalty when there are none.
double log_pdet(const SymMatrix& a, double rank_tol = kDefaultRankTol);

/// Eigenvalue clamp to a minimum of eps * lambda_max. Returns the input
/// unchanged when it already satisfies the bound.
SymMatrix nearest_pd(const SymMatrix& a, double eps = kDefaultPdEps);

bool is_positive_definite(const SymMatrix& a);

Matrix kron(const Matrix& a, const Matrix& b);

/// tr(AB) = sum_ij A_ij B_ij for symmetric A, B.
double trace_product(const SymMatrix& a, const SymMatrix& b);
double trace_product(const Matrix& a, const Matrix& b);

/// Solves AX = B through a Cholesky factorization. Throws FactorizationError
/// when A is not numerically positive definite.
Matrix solve_spd(const SymMatrix& a, const Matrix& b);

/// log|A| for positive definite A via Cholesky.
double log_det_spd(const SymMatrix& a);

}  // namespace mshmm
