#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mshmm/errors.hpp"
#include "mshmm/qreml.hpp"
#include "support.hpp"

using namespace mshmm;
using namespace testing;

namespace {

// l(theta) = -|y - theta|^2 / 2.
class Diagonal final : public LikelihoodModel {
 public:
  explicit Diagonal(Vector y) : y_(std::move(y)) {}
  Index dim() const override { return y_.size(); }
  Index n_obs() const override { return y_.size(); }
  double loglik(const Vector& th) const override { return -0.5 * (y_ - th).squaredNorm(); }
  double loglik_gradient(const Vector& th, Vector& g) const override {
    g = y_ - th;
    return loglik(th);
  }

 private:
  Vector y_;
};

// Random direction with squared norm s.
Vector with_norm2(Index k, double s, std::mt19937_64& rng) {
  const Vector v = random_vector(k, rng);
  return v * std::sqrt(s) / v.norm();
}

// Closed forms for one identity block on all k coefficients, |y|^2 = Y.
double toy_gradient(double l, double k, double Y) {
  return -0.5 * Y / ((1 + l) * (1 + l)) + k / (2 * l) - k / (2 * (1 + l));
}
double toy_second(double l, double k, double Y) {
  return Y / std::pow(1 + l, 3) - k / (2 * l * l) + k / (2 * (1 + l) * (1 + l));
}

QremlOptions quiet_options() {
  QremlOptions opt;
  opt.inner.bfgs.grad_tol = 1e-10;
  return opt;
}

}  // namespace

TEST_CASE("LambdaMap: labels, members, collapse and expand") {
  const LambdaMap m = LambdaMap::from_labels({7, LambdaMap::kFixed, 3, 7});
  CHECK(m.n_groups == 2);
  CHECK(m.group == std::vector<int>{0, LambdaMap::kFixed, 1, 0});
  CHECK(m.members(0) == std::vector<std::size_t>{0, 3});
  Vector lambda(4);
  lambda << 1, 2, 3, 4;
  CHECK(m.collapse(lambda) == Vector{{1.0, 3.0}});
  m.expand(Vector{{10.0, 30.0}}, lambda);
  CHECK(lambda == Vector{{10.0, 2.0, 30.0, 10.0}});
  CHECK_THROWS_AS(m.validate(3), InvalidInput);
}

TEST_CASE("outer gradient on the diagonal model at theta = 0") {
  for (int k : {1, 3, 6}) {
    const PenaltyModel pen({{SymMatrix::identity(k), 0, "re"}}, k);
    for (double l : {0.01, 1.0, 50.0}) {
      const SymMatrix J = SymMatrix::identity(k) * (1 + l);
      const Vector g = outer_gradient(pen, LambdaMap::identity(1), Vector::Constant(1, l), Vector::Zero(k), J);
      const double want = k / (2 * l) - k / (2 * (1 + l));
      CHECK(g(0) == doctest::Approx(want).epsilon(1e-12));
      CHECK(g(0) > 0);
    }
  }
}

TEST_CASE("lambda update: planted example, sign analysis and positivity") {
  const PenaltyModel pen({{SymMatrix::identity(2), 0, "re"}}, 2);
  Vector th(2);
  th << 0.6, 0.8;
  const OuterTerms t = outer_terms(pen, LambdaMap::identity(1), Vector::Constant(1, 1.0), th, SymMatrix::identity(2) * 2.0);
  CHECK(t.q(0) == doctest::Approx(1.0));
  CHECK(lambda_update(t).groups(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(t.gradient(0)) <= 1e-12);

  std::mt19937_64 rng(1);
  const PenaltyModel two({{SymMatrix::identity(3), 0, "a"}, {SymMatrix::identity(2), 3, "b"}}, 6);
  int up = 0, down = 0;
  for (int rep = 0; rep < 200; ++rep) {
    Vector lambda = (2 * random_vector(2, rng)).array().exp();
    const Matrix B = random_matrix(6, 6, rng);
    const SymMatrix J = SymMatrix::symmetrized(B * B.transpose() + two.assemble(lambda).matrix());
    const Vector theta = random_vector(6, rng) * std::exp(random_vector(1, rng)(0));
    const OuterTerms ot = outer_terms(two, LambdaMap::identity(2), lambda, theta, J);
    const LambdaProposal p = lambda_update(ot);
    for (Index g = 0; g < 2; ++g) {
      CHECK(p.groups(g) > 0);
      if (p.capped[static_cast<std::size_t>(g)] || p.fallback[static_cast<std::size_t>(g)]) continue;
      CHECK(ot.tr_pinv(g) - ot.tr_jinv(g) > 0);
      if (ot.gradient(g) > 0) {
        CHECK(p.groups(g) > lambda(g));
        ++up;
      } else if (ot.gradient(g) < 0) {
        CHECK(p.groups(g) < lambda(g));
        ++down;
      }
    }
  }
  CHECK(up > 20);
  CHECK(down > 20);
}

TEST_CASE("lambda update: null quadratic form is capped, fixed blocks untouched") {
  const PenaltyModel pen({{SymMatrix::identity(2), 0, "a"}, {SymMatrix::identity(2), 2, "b"}}, 4);
  const Vector th = Vector::Zero(4);
  const LambdaMap map = LambdaMap::from_labels({0, LambdaMap::kFixed});
  const OuterTerms t = outer_terms(pen, map, Vector::Constant(2, 3.0), th, SymMatrix::identity(4) * 4.0);
  REQUIRE(t.q.size() == 1);
  const LambdaProposal p = lambda_update(t);
  CHECK(p.capped[0]);
  CHECK(p.groups(0) == UpdateOptions{}.lambda_cap);
}

TEST_CASE("mapped pair of identical blocks shares the single-block update") {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 5; ++rep) {
    const Index k = 3;
    const Vector t = random_vector(k, rng);
    const Matrix B = random_matrix(k, k, rng);
    const double l = std::exp(random_vector(1, rng)(0));
    const Matrix Jk = B * B.transpose() + l * Matrix::Identity(k, k);
    const PenaltyModel one({{SymMatrix::identity(k), 0, "a"}}, k);
    const double single =
        lambda_update(outer_terms(one, LambdaMap::identity(1), Vector::Constant(1, l), t, SymMatrix::symmetrized(Jk))).groups(0);
    const PenaltyModel pair({{SymMatrix::identity(k), 0, "a"}, {SymMatrix::identity(k), k, "b"}}, 2 * k);
    Vector tt(2 * k);
    tt << t, t;
    Matrix J2 = Matrix::Zero(2 * k, 2 * k);
    J2.topLeftCorner(k, k) = Jk;
    J2.bottomRightCorner(k, k) = Jk;
    const Vector lambda = Vector::Constant(2, l);
    const double mapped =
        lambda_update(outer_terms(pair, LambdaMap::from_labels({0, 0}), lambda, tt, SymMatrix::symmetrized(J2))).groups(0);
    const Vector separate =
        lambda_update(outer_terms(pair, LambdaMap::identity(2), lambda, tt, SymMatrix::symmetrized(J2))).groups;
    CHECK(mapped == doctest::Approx(single).epsilon(1e-10));
    CHECK(separate(0) == doctest::Approx(single).epsilon(1e-10));
    CHECK(separate(1) == doctest::Approx(single).epsilon(1e-10));
  }
}

TEST_CASE("restricted likelihood on the diagonal model") {
  std::mt19937_64 rng(3);
  const Index k = 4;
  const Vector y = with_norm2(k, 12.0, rng);
  const Diagonal m(y);
  const PenaltyModel pen({{SymMatrix::identity(k), 0, "re"}}, k);
  for (double l : {0.1, 0.5, 2.0}) {
    const Vector th = y / (1 + l);
    const SymMatrix J = SymMatrix::identity(k) * (1 + l);
    const double lr = restricted_loglik_value(m.loglik(th), pen, Vector::Constant(1, l), th, J);
    const double closed = m.loglik(th) - l * th.squaredNorm() / 2 + k / 2.0 * std::log(l) - k / 2.0 * std::log(1 + l);
    CHECK(lr == doctest::Approx(closed).epsilon(1e-12));
  }
}

TEST_CASE("qreml on the diagonal model: fixed point, convergence and criteria") {
  std::mt19937_64 rng(4);
  const Index k = 5;
  const double Y = 3.0 * k;
  const Diagonal m(with_norm2(k, Y, rng));
  const PenaltyModel pen({{SymMatrix::identity(k), 0, "re"}}, k);
  const double fixed_point = k / (Y - k);
  CHECK(std::abs(toy_gradient(fixed_point, k, Y)) <= 1e-14);

  const FitResult at = qreml(m, pen, LambdaMap::identity(1), Vector::Constant(1, fixed_point), Vector::Zero(k), quiet_options());
  CHECK(at.converged());
  CHECK(at.trace.iterations.size() == 1);

  const FitResult fit = qreml(m, pen, LambdaMap::identity(1), Vector::Constant(1, 100.0), Vector::Zero(k), quiet_options());
  REQUIRE(fit.converged());
  CHECK(fit.trace.iterations.size() > 3);
  CHECK(fit.lambda(0) == doctest::Approx(fixed_point).epsilon(2e-2));
  CHECK(std::abs(fit.outer_gradient(0)) < 1e-4);
  for (const OuterIteration& it : fit.trace.iterations) {
    CHECK(it.lambda(0) > 0);
    CHECK(std::isfinite(it.restricted_loglik));
    CHECK(it.gradient(0) == doctest::Approx(toy_gradient(it.lambda(0), k, Y)).epsilon(1e-6));
    // Simple-smooth reduction along the path.
    const PenaltyInverse inv = pen.inverse(it.lambda);
    CHECK(std::abs(it.lambda(0) * pen.trace_pinv(inv)(0) - static_cast<double>(k)) <= 1e-8);
  }
  const std::size_t n = fit.trace.iterations.size();
  for (std::size_t i = n - std::min<std::size_t>(n, 5) + 1; i < n; ++i) {
    const double prev = fit.trace.iterations[i - 1].gradient.cwiseAbs().maxCoeff();
    CHECK(fit.trace.iterations[i].gradient.cwiseAbs().maxCoeff() <= 1.1 * prev);
  }
  const double l = fit.lambda(0);
  CHECK(fit.edf == doctest::Approx(k / (1 + l)).epsilon(1e-6));
  CHECK(fit.aic == doctest::Approx(-2 * fit.loglik + 2 * fit.edf).epsilon(1e-12));
  CHECK(fit.bic == doctest::Approx(-2 * fit.loglik + std::log(static_cast<double>(k)) * fit.edf).epsilon(1e-12));
}

TEST_CASE("mapping two structurally identical terms gives a lambda between the separate fits") {
  std::mt19937_64 rng(5);
  const Index k = 4;
  Vector y(2 * k);
  y << with_norm2(k, 3.0 * k, rng), with_norm2(k, 5.0 * k, rng);
  const Diagonal m(y);
  const PenaltyModel pen({{SymMatrix::identity(k), 0, "a"}, {SymMatrix::identity(k), k, "b"}}, 2 * k);
  const Vector l0 = Vector::Constant(2, 10.0);
  const FitResult sep = qreml(m, pen, LambdaMap::identity(2), l0, Vector::Zero(2 * k), quiet_options());
  const FitResult map = qreml(m, pen, LambdaMap::from_labels({0, 0}), l0, Vector::Zero(2 * k), quiet_options());
  REQUIRE(sep.converged());
  REQUIRE(map.converged());
  CHECK(sep.lambda(0) == doctest::Approx(0.5).epsilon(2e-2));
  CHECK(sep.lambda(1) == doctest::Approx(0.25).epsilon(2e-2));
  CHECK(map.lambda(0) == map.lambda(1));
  CHECK(map.lambda(0) == doctest::Approx(1.0 / 3.0).epsilon(2e-2));
  const double lo = std::min(sep.lambda(0), sep.lambda(1)), hi = std::max(sep.lambda(0), sep.lambda(1));
  CHECK(map.lambda(0) >= lo / 2);
  CHECK(map.lambda(0) <= hi * 2);
}

TEST_CASE("sdreport on the diagonal model matches the analytic curvature") {
  std::mt19937_64 rng(6);
  const Index k = 6;
  const double Y = 4.0 * k;
  const Diagonal m(with_norm2(k, Y, rng));
  const PenaltyModel pen({{SymMatrix::identity(k), 0, "re"}}, k);
  const QremlOptions opt = quiet_options();
  const FitResult fit = qreml(m, pen, LambdaMap::identity(1), Vector::Constant(1, 5.0), Vector::Zero(k), opt);
  REQUIRE(fit.converged());
  const OuterCovariance cov = sdreport_outer(m, pen, fit, opt);
  REQUIRE(cov.invertible);
  CHECK(cov.refits == 1);
  const double l = fit.lambda(0);
  const double h = toy_second(l, k, Y);
  CHECK(h < 0);
  CHECK(std::abs(cov.hessian(0, 0) - h) <= 1e-3 * std::abs(h));
  CHECK(cov.cov_lambda(0, 0) == doctest::Approx(-1.0 / cov.hessian(0, 0)).epsilon(1e-12));
  CHECK(cov.se_lambda(0) == doctest::Approx(std::sqrt(cov.cov_lambda(0, 0))).epsilon(1e-12));
  CHECK(cov.var_sigma2(0) == doctest::Approx(cov.cov_lambda(0, 0) / std::pow(l, 4)).epsilon(1e-12));
}

TEST_CASE("sdreport: one refit per free group, delta method per group") {
  std::mt19937_64 rng(7);
  const Index k = 3;
  Vector y(3 * k);
  y << with_norm2(k, 3.0 * k, rng), with_norm2(k, 5.0 * k, rng), with_norm2(k, 4.0 * k, rng);
  const Diagonal m(y);
  const PenaltyModel pen(
      {{SymMatrix::identity(k), 0, "a"}, {SymMatrix::identity(k), k, "b"}, {SymMatrix::identity(k), 2 * k, "c"}}, 3 * k);
  const QremlOptions opt = quiet_options();
  const FitResult fit =
      qreml(m, pen, LambdaMap::from_labels({0, LambdaMap::kFixed, 1}), Vector::Constant(3, 2.0), Vector::Zero(3 * k), opt);
  REQUIRE(fit.converged());
  CHECK(fit.lambda(1) == 2.0);
  const OuterCovariance cov = sdreport_outer(m, pen, fit, opt);
  CHECK(cov.refits == 2);
  REQUIRE(cov.invertible);
  // Separable model: the off-diagonal curvature vanishes.
  CHECK(std::abs(cov.hessian(0, 1)) <= 1e-3 * std::sqrt(std::abs(cov.hessian(0, 0) * cov.hessian(1, 1))));
  const Vector groups = fit.map.collapse(fit.lambda);
  for (Index g = 0; g < 2; ++g) {
    CHECK(cov.var_sigma2(g) == doctest::Approx(std::pow(groups(g), -4) * cov.cov_lambda(g, g)).epsilon(1e-12));
  }
}

TEST_CASE("effective degrees of freedom") {
  std::mt19937_64 rng(8);
  const Matrix B = random_matrix(5, 5, rng);
  const SymMatrix S = SymMatrix::symmetrized(Matrix(Vector{{0.0, 0.0, 1.0, 2.0, 3.0}}.asDiagonal()));
  const SymMatrix J = SymMatrix::symmetrized(B * B.transpose() + S.matrix());
  const Matrix H = J.matrix() - S.matrix();
  CHECK(effective_df(J, S) == doctest::Approx((J.matrix().inverse() * H).trace()).epsilon(1e-10));
  CHECK(effective_df(J, SymMatrix::zero(5)) == doctest::Approx(5.0));
}
