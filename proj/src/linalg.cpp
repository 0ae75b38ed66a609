#include "mshmm/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "mshmm/errors.hpp"

namespace mshmm {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw InvalidInput(std::string(what) + ": non-finite entries");
  }
}

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw InvalidInput(std::string(what) + ": matrix is not square");
  }
}

}  // namespace

SymMatrix::SymMatrix(const Matrix& m) {
  require_square(m, "SymMatrix");
  require_finite(m, "SymMatrix");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (m.size() > 0 && (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvalidInput("SymMatrix: matrix is not symmetric");
  }
  m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::symmetrized(const Matrix& m) {
  require_square(m, "SymMatrix::symmetrized");
  require_finite(m, "SymMatrix::symmetrized");
  SymMatrix s;
  s.m_ = 0.5 * (m + m.transpose());
  return s;
}

SymMatrix SymMatrix::identity(Index n) {
  SymMatrix s;
  s.m_ = Matrix::Identity(n, n);
  return s;
}

SymMatrix SymMatrix::zero(Index n) {
  SymMatrix s;
  s.m_ = Matrix::Zero(n, n);
  return s;
}

SymMatrix SymMatrix::diagonal(const Vector& d) {
  require_finite(d, "SymMatrix::diagonal");
  SymMatrix s;
  s.m_ = d.asDiagonal();
  return s;
}

SymMatrix SymMatrix::operator+(const SymMatrix& o) const {
  SymMatrix s;
  s.m_ = m_ + o.m_;
  return s;
}

SymMatrix SymMatrix::operator-(const SymMatrix& o) const {
  SymMatrix s;
  s.m_ = m_ - o.m_;
  return s;
}

SymMatrix SymMatrix::operator*(double c) const {
  SymMatrix s;
  s.m_ = m_ * c;
  return s;
}

EigenFactorization eigen_sym(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.matrix());
  if (es.info() != Eigen::Success) {
    throw InvalidInput("eigen_sym: eigensolver failed");
  }
  // Eigen sorts ascending.
  EigenFactorization f;
  f.eigenvalues = es.eigenvalues().reverse();
  f.eigenvectors = es.eigenvectors().rowwise().reverse();
  return f;
}

Index numerical_rank(const SymMatrix& a, double rank_tol) {
  if (a.dim() == 0) return 0;
  const auto f = eigen_sym(a);
  const double cutoff = rank_tol * f.eigenvalues(0);
  if (f.eigenvalues(0) <= 0.0) return 0;
  return (f.eigenvalues.array() > cutoff).count();
}

SymMatrix pseudo_inverse(const SymMatrix& a, double rank_tol) {
  require_finite(a.matrix(), "pseudo_inverse");
  const Index n = a.dim();
  if (n == 0) return a;
  const auto f = eigen_sym(a);
  const double lmax = f.eigenvalues(0);
  Vector inv = Vector::Zero(n);
  if (lmax > 0.0) {
    const double cutoff = rank_tol * lmax;
    for (Index i = 0; i < n; ++i) {
      if (f.eigenvalues(i) > cutoff) inv(i) = 1.0 / f.eigenvalues(i);
    }
  }
  return SymMatrix::symmetrized(f.eigenvectors * inv.asDiagonal() *
                                f.eigenvectors.transpose());
}

double log_pdet(const SymMatrix& a, double rank_tol) {
  require_finite(a.matrix(), "log_pdet");
  if (a.dim() == 0) throw DegeneratePenalty("log_pdet: empty matrix");
  const auto f = eigen_sym(a);
  const double lmax = f.eigenvalues(0);
  if (!(lmax > 0.0)) throw DegeneratePenalty("log_pdet: no positive eigenvalue");
  const double cutoff = rank_tol * lmax;
  double s = 0.0;
  for (Index i = 0; i < f.eigenvalues.size(); ++i) {
    if (f.eigenvalues(i) > cutoff) s += std::log(f.eigenvalues(i));
  }
  return s;
}

SymMatrix nearest_pd(const SymMatrix& a, double eps) {
  require_finite(a.matrix(), "nearest_pd");
  if (a.dim() == 0) return a;
  const auto f = eigen_sym(a);
  const double lmax = f.eigenvalues(0);
  // With no positive eigenvalue the scale comes from the largest magnitude.
  const double scale = lmax > 0.0 ? lmax : f.eigenvalues.cwiseAbs().maxCoeff();
  const double floor = eps * (scale > 0.0 ? scale : 1.0);
  if (f.eigenvalues.minCoeff() >= floor) return a;
  Vector clamped = f.eigenvalues.cwiseMax(floor);
  return SymMatrix::symmetrized(f.eigenvectors * clamped.asDiagonal() *
                                f.eigenvectors.transpose());
}

bool is_positive_definite(const SymMatrix& a) {
  Eigen::LLT<Matrix> llt(a.matrix());
  return llt.info() == Eigen::Success;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  require_finite(a, "kron");
  require_finite(b, "kron");
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

double trace_product(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput("trace_product: dimension mismatch");
  }
  return a.cwiseProduct(b).sum();
}

double trace_product(const SymMatrix& a, const SymMatrix& b) {
  return trace_product(a.matrix(), b.matrix());
}

Matrix solve_spd(const SymMatrix& a, const Matrix& b) {
  if (a.dim() != b.rows()) throw InvalidInput("solve_spd: dimension mismatch");
  Eigen::LLT<Matrix> llt(a.matrix());
  if (llt.info() != Eigen::Success) {
    throw FactorizationError("solve_spd: matrix is not positive definite");
  }
  return llt.solve(b);
}

double log_det_spd(const SymMatrix& a) {
  Eigen::LLT<Matrix> llt(a.matrix());
  if (llt.info() != Eigen::Success) {
    throw FactorizationError("log_det_spd: matrix is not positive definite");
  }
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace mshmm
