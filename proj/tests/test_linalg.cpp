#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "mshmm/errors.hpp"
#include "mshmm/linalg.hpp"
#include "support.hpp"

using namespace mshmm;
using namespace testing;

namespace {

SymMatrix diag(std::initializer_list<double> d) {
  Vector v(static_cast<Index>(d.size()));
  Index k = 0;
  for (double x : d) v(k++) = x;
  return SymMatrix::diagonal(v);
}

// B B^T with B random n x r.
SymMatrix random_psd(Index n, Index r, std::mt19937_64& rng) {
  const Matrix B = random_matrix(n, r, rng);
  return SymMatrix::symmetrized(B * B.transpose());
}

// Orthogonal Q diag(spec) Q^T.
SymMatrix planted(const Vector& spec, std::mt19937_64& rng) {
  const Eigen::HouseholderQR<Matrix> qr(random_matrix(spec.size(), spec.size(), rng));
  const Matrix Q = qr.householderQ();
  return SymMatrix::symmetrized(Q * spec.asDiagonal() * Q.transpose());
}

// Independent pseudo-inverse from a singular value decomposition.
Matrix svd_pinv(const Matrix& a, double tol) {
  const Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector s = svd.singularValues();
  Vector inv = Vector::Zero(s.size());
  for (Index k = 0; k < s.size(); ++k) {
    if (s(k) > tol * s(0)) inv(k) = 1.0 / s(k);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("SymMatrix construction checks symmetry and finiteness") {
  Matrix a(2, 2);
  a << 1, 2, 2, 3;
  CHECK(SymMatrix(a).dim() == 2);
  a(0, 1) = 2.0 + 1e-6;
  CHECK_THROWS_AS(SymMatrix{a}, InvalidInput);
  a(0, 1) = 2.0 * (1 + 1e-14);
  const SymMatrix s(a);
  CHECK(s(0, 1) == s(1, 0));
  a(0, 1) = a(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(SymMatrix{a}, InvalidInput);
}

TEST_CASE("eigen_sym: descending order, reconstruction and orthonormality") {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 5; ++rep) {
    const SymMatrix a = random_psd(6, 6, rng) - SymMatrix::identity(6) * 2.0;
    const EigenFactorization e = eigen_sym(a);
    for (Index k = 1; k < 6; ++k) CHECK(e.eigenvalues(k - 1) >= e.eigenvalues(k));
    const Matrix& V = e.eigenvectors;
    const Matrix rec = V * e.eigenvalues.asDiagonal() * V.transpose();
    CHECK((rec - a.matrix()).norm() / a.matrix().norm() <= 1e-10);
    CHECK(max_abs_diff(V.transpose() * V, Matrix::Identity(6, 6)) <= 1e-10);
  }
}

TEST_CASE("pseudo_inverse examples") {
  CHECK(max_abs_diff(pseudo_inverse(diag({2, 0})).matrix(), diag({0.5, 0}).matrix()) == 0.0);
  CHECK(max_abs_diff(pseudo_inverse(SymMatrix::identity(3)).matrix(), Matrix::Identity(3, 3)) <= 1e-15);
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 10; ++rep) {
    const SymMatrix a = random_psd(5, 3, rng);
    const SymMatrix p = pseudo_inverse(a);
    CHECK(max_abs_diff(p.matrix(), svd_pinv(a.matrix(), 1e-8)) <= 1e-8 * std::max(1.0, p.matrix().norm()));
    CHECK(max_abs_diff(a.matrix() * p.matrix() * a.matrix(), a.matrix()) <= 1e-8 * a.matrix().norm());
    // Involution on the image.
    CHECK(max_abs_diff(pseudo_inverse(p).matrix(), a.matrix()) <= 1e-8 * a.matrix().norm());
  }
}

TEST_CASE("pseudo_inverse clamps small negative eigenvalues") {
  const SymMatrix a = diag({4, -1e-12, 1});
  CHECK(max_abs_diff(pseudo_inverse(a).matrix(), diag({0.25, 0, 1}).matrix()) <= 1e-15);
  Matrix bad = Matrix::Identity(2, 2);
  bad(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(pseudo_inverse(SymMatrix::symmetrized(bad)), InvalidInput);
}

TEST_CASE("log_pdet examples and scaling") {
  CHECK(log_pdet(diag({2, 3, 0})) == doctest::Approx(std::log(6.0)).epsilon(1e-15));
  CHECK(std::abs(log_pdet(SymMatrix::identity(4))) <= 1e-15);
  CHECK_THROWS_AS(log_pdet(SymMatrix::zero(3)), DegeneratePenalty);
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    Vector spec(6);
    spec << 5.0, 2.5, 1.0, 0.3, 0.0, 0.0;
    const SymMatrix a = planted(spec, rng);
    const double oracle = std::log(5.0) + std::log(2.5) + std::log(1.0) + std::log(0.3);
    CHECK(std::abs(log_pdet(a) - oracle) <= 1e-10);
    CHECK(numerical_rank(a) == 4);
    const double c = 7.5;
    CHECK(std::abs(log_pdet(a * c) - (log_pdet(a) + 4 * std::log(c))) <= 1e-8);
  }
}

TEST_CASE("nearest_pd examples") {
  const double eps = 1e-8;
  const SymMatrix a = diag({1, 2});
  CHECK(max_abs_diff(nearest_pd(a, eps).matrix(), a.matrix()) == 0.0);
  CHECK(max_abs_diff(nearest_pd(diag({1, -1}), eps).matrix(), diag({1, eps}).matrix()) <= 1e-15);
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  // Eigenpairs 1: (1,1)/sqrt2, -1: (1,-1)/sqrt2.
  Matrix V(2, 2);
  V << 1, 1, 1, -1;
  V /= std::sqrt(2.0);
  const Matrix oracle = V * Eigen::Vector2d(1.0, eps).asDiagonal() * V.transpose();
  CHECK(max_abs_diff(nearest_pd(SymMatrix(m), eps).matrix(), oracle) <= 1e-15);
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 5; ++rep) {
    const SymMatrix b = SymMatrix::symmetrized(random_matrix(5, 5, rng) + random_matrix(5, 5, rng).transpose());
    const SymMatrix p = nearest_pd(b, eps);
    const Vector ev = eigen_sym(p).eigenvalues;
    CHECK(ev.minCoeff() >= eps * ev.maxCoeff() * (1 - 1e-6));
    CHECK(is_positive_definite(p));
  }
}

TEST_CASE("kron examples, loop oracle and quadratic form") {
  CHECK(max_abs_diff(kron(Matrix::Identity(2, 2), Matrix::Identity(3, 3)), Matrix::Identity(6, 6)) == 0.0);
  Matrix e(2, 2);
  e << 1, 0, 0, 0;
  Matrix two(1, 1);
  two << 2;
  Matrix want(2, 2);
  want << 2, 0, 0, 0;
  CHECK(max_abs_diff(kron(e, two), want) == 0.0);
  std::mt19937_64 rng(5);
  const Matrix A = random_matrix(2, 2, rng), B = random_matrix(3, 3, rng);
  const Matrix K = kron(A, B);
  REQUIRE(K.rows() == 6);
  REQUIRE(K.cols() == 6);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < 3; ++k) {
        for (int l = 0; l < 3; ++l) CHECK(K(i * 3 + k, j * 3 + l) == A(i, j) * B(k, l));
      }
    }
  }
  const SymMatrix As = random_psd(3, 3, rng), Bs = random_psd(4, 2, rng);
  for (int rep = 0; rep < 5; ++rep) {
    const Vector u = random_vector(3, rng), v = random_vector(4, rng);
    const Vector uv = kron(u, v);
    const double lhs = uv.dot(kron(As.matrix(), Bs.matrix()) * uv);
    const double rhs = u.dot(As.matrix() * u) * v.dot(Bs.matrix() * v);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("trace_product examples and oracle") {
  CHECK(trace_product(SymMatrix::identity(3), SymMatrix::identity(3)) == 3.0);
  CHECK(trace_product(diag({1, 2}), diag({3, 4})) == 11.0);
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 5; ++rep) {
    const SymMatrix a = SymMatrix::symmetrized(random_matrix(5, 5, rng));
    const SymMatrix b = SymMatrix::symmetrized(random_matrix(5, 5, rng));
    const double oracle = (a.matrix() * b.matrix()).trace();
    CHECK(std::abs(trace_product(a, b) - oracle) <= 1e-12 * std::max(1.0, std::abs(oracle)));
  }
  CHECK_THROWS_AS(trace_product(SymMatrix::identity(2), SymMatrix::identity(3)), InvalidInput);
}

TEST_CASE("solve_spd examples and residual") {
  std::mt19937_64 rng(7);
  const Matrix B = random_matrix(3, 2, rng);
  CHECK(max_abs_diff(solve_spd(SymMatrix::identity(3), B), B) <= 1e-15);
  CHECK(max_abs_diff(solve_spd(diag({2, 4}), Matrix::Identity(2, 2)), diag({0.5, 0.25}).matrix()) <= 1e-15);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix L = random_matrix(6, 6, rng).triangularView<Eigen::Lower>();
    const SymMatrix A = SymMatrix::symmetrized(L * L.transpose() + Matrix::Identity(6, 6));
    const Matrix R = random_matrix(6, 3, rng);
    const Matrix X = solve_spd(A, R);
    CHECK((A.matrix() * X - R).norm() <= 1e-8 * R.norm());
    CHECK(std::abs(log_det_spd(A) - std::log(A.matrix().determinant())) <= 1e-10);
  }
  CHECK_THROWS_AS(solve_spd(diag({1, -1}), Matrix::Identity(2, 2)), FactorizationError);
}
