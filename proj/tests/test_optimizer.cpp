#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mshmm/model.hpp"
#include "mshmm/optimizer.hpp"
#include "support.hpp"

using namespace mshmm;
using namespace testing;

namespace {

// 0.5 x^T A x - b^T x.
class Quadratic final : public Objective {
 public:
  Quadratic(Matrix a, Vector b) : a_(std::move(a)), b_(std::move(b)) {}
  Index dim() const override { return a_.rows(); }
  double value(const Vector& x) const override { return 0.5 * x.dot(a_ * x) - b_.dot(x); }
  double value_gradient(const Vector& x, Vector& g) const override {
    g = a_ * x - b_;
    return value(x);
  }

 private:
  Matrix a_;
  Vector b_;
};

class Rosenbrock final : public Objective {
 public:
  Index dim() const override { return 2; }
  double value(const Vector& x) const override {
    return 100 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1 - x(0), 2);
  }
  double value_gradient(const Vector& x, Vector& g) const override {
    g.resize(2);
    g(0) = -400 * x(0) * (x(1) - x(0) * x(0)) - 2 * (1 - x(0));
    g(1) = 200 * (x(1) - x(0) * x(0));
    return value(x);
  }
};

// Linear Gaussian log-likelihood -|y - X theta|^2 / 2.
class GaussianToy final : public LikelihoodModel {
 public:
  GaussianToy(Matrix X, Vector y) : X_(std::move(X)), y_(std::move(y)) {}
  Index dim() const override { return X_.cols(); }
  Index n_obs() const override { return X_.rows(); }
  double loglik(const Vector& th) const override { return -0.5 * (y_ - X_ * th).squaredNorm(); }
  double loglik_gradient(const Vector& th, Vector& g) const override {
    const Vector r = y_ - X_ * th;
    g = X_.transpose() * r;
    return -0.5 * r.squaredNorm();
  }

 private:
  Matrix X_;
  Vector y_;
};

Matrix spd(Index d, double cond, std::mt19937_64& rng) {
  const Eigen::HouseholderQR<Matrix> qr(random_matrix(d, d, rng));
  const Matrix Q = qr.householderQ();
  Vector ev(d);
  for (Index i = 0; i < d; ++i) ev(i) = std::pow(cond, static_cast<double>(i) / static_cast<double>(d - 1));
  return Q * ev.asDiagonal() * Q.transpose();
}

ObservationTable smooth_data(Index T, std::uint64_t seed) {
  ObservationTable d = frame(T, {"step"});
  d.set_covariate("tday", cycle(T, 24, 1));
  const HmmSpec s = spec(2, {{"step", Family::gamma}}, formula({smooth_term(TermMode::simple, {cyclic("tday", 10, 24)})}));
  return simulate_into(s, d, [](const HmmModel& m) {
    Vector th = m.default_theta();
    th.head(4) << std::log(1.0), std::log(5.0), std::log(0.5), std::log(2.0);
    for (int e = 0; e < 2; ++e) {
      const Index off = m.entry_offset(e);
      th(off) = -2.0;
      for (Index k = 1; k < m.design(e).cols(); ++k) th(off + k) = (e == 0 ? 0.8 : -0.8) * std::sin(0.7 * k);
    }
    return th;
  }, seed);
}

}  // namespace

TEST_CASE("BFGS on a convex quadratic reaches the exact minimizer in at most d+5 iterations") {
  std::mt19937_64 rng(1);
  // Finite termination needs (near) exact line searches.
  BfgsOptions exact;
  exact.c2 = 1e-6;
  exact.max_line_evals = 100;
  exact.grad_tol = 1e-9;
  exact.stall_iterations = 1000;
  for (Index d : {2, 5, 10, 20}) {
    const Matrix A = spd(d, 10.0, rng);
    const Vector b = random_vector(d, rng);
    const Quadratic f(A, b);
    const Vector xstar = A.ldlt().solve(b);
    const BfgsResult r = bfgs_minimize(f, Vector::Zero(d), exact);
    CHECK(r.converged);
    CHECK((r.x - xstar).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(r.iterations <= d + 5);
    const BfgsResult w = bfgs_minimize(f, Vector::Zero(d));
    CHECK(w.converged);
    MESSAGE("d=" << d << ": " << r.message << "; " << r.iterations << " iterations with exact line search, " << w.iterations
                 << " with the default Wolfe constants");
  }
}

TEST_CASE("BFGS stopping rule and descent") {
  const Rosenbrock f;
  Vector x0(2);
  x0 << -1.2, 1.0;
  const BfgsOptions opt;
  const BfgsResult r = bfgs_minimize(f, x0, opt);
  REQUIRE(r.converged);
  CHECK(r.gradient.cwiseAbs().maxCoeff() <= opt.grad_tol * (1 + std::abs(r.value)));
  CHECK(r.value <= f.value(x0));
  CHECK(std::abs(r.x(0) - 1.0) <= 1e-5);
  CHECK(std::abs(r.x(1) - 1.0) <= 1e-5);
  BfgsOptions few = opt;
  few.max_iter = 3;
  const BfgsResult s = bfgs_minimize(f, x0, few);
  CHECK_FALSE(s.converged);
  CHECK(s.value <= f.value(x0));
}

TEST_CASE("inner_fit on a Gaussian model equals the penalized least squares solution") {
  std::mt19937_64 rng(2);
  const Matrix X = random_matrix(40, 6, rng);
  const Vector y = random_vector(40, rng);
  const GaussianToy m(X, y);
  const PenaltyModel pen({{SymMatrix::identity(4), 2, "re"}}, 6);
  for (double l : {0.1, 10.0, 1e4}) {
    const Vector lambda = Vector::Constant(1, l);
    const Matrix J = X.transpose() * X + pen.assemble(lambda).matrix();
    const Vector exact = J.ldlt().solve(X.transpose() * y);
    const InnerFit fit = inner_fit(m, pen, lambda, Vector::Zero(6));
    CHECK((fit.theta - exact).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((fit.J.matrix() - J).cwiseAbs().maxCoeff() <= 1e-5 * J.norm());
    CHECK_FALSE(fit.J_corrected);
    CHECK(fit.objective <= -m.loglik(Vector::Zero(6)));
    CHECK(fit.objective == doctest::Approx(-fit.loglik + pen.value(lambda, fit.theta)).epsilon(1e-12));
  }
}

TEST_CASE("penalized objective is monotone in lambda at fixed theta") {
  std::mt19937_64 rng(3);
  const PenaltyModel pen({{SymMatrix::identity(3), 0, "a"}, {SymMatrix::identity(2), 3, "b"}}, 5);
  const GaussianToy m(random_matrix(10, 5, rng), random_vector(10, rng));
  for (int rep = 0; rep < 10; ++rep) {
    const Vector th = random_vector(5, rng);
    Vector lambda = random_vector(2, rng).cwiseAbs();
    double prev = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < 5; ++k) {
      const double v = grad_penalized_nll(m, pen, lambda, th).value;
      CHECK(v > prev);
      prev = v;
      lambda(k % 2) *= 3.0;
    }
  }
}

TEST_CASE("HMM smooth shrinks towards a constant as lambda grows") {
  const ObservationTable d = smooth_data(1500, 4);
  const HmmSpec s = spec(2, {{"step", Family::gamma}}, formula({smooth_term(TermMode::simple, {cyclic("tday", 10, 24)})}));
  const HmmModel m(s, d);
  const PenaltyModel pen = m.penalties();
  Vector theta = m.default_theta();
  theta.head(4) << std::log(1.0), std::log(5.0), std::log(0.5), std::log(2.0);
  double prev = std::numeric_limits<double>::infinity();
  ObservationTable grid = frame(24, {"step"});
  grid.set_covariate("tday", cycle(24, 24, 1));
  int cold_iterations = 0, warm_iterations = 0;
  for (double l : {1e1, 1e2, 1e3, 1e4, 1e5, 1e6}) {
    const Vector lambda = Vector::Constant(static_cast<Index>(pen.size()), l);
    const InnerFit fit = inner_fit(m, pen, lambda, theta);
    const Matrix eta = m.predictors(fit.theta, grid);
    double dev = 0.0;
    for (Index c = 0; c < eta.cols(); ++c) dev = std::max(dev, (eta.col(c).array() - eta.col(c).mean()).abs().maxCoeff());
    CHECK(dev < prev);
    prev = dev;
    if (l == 1e3) {
      const Vector nearby = Vector::Constant(static_cast<Index>(pen.size()), 1.2e3);
      cold_iterations = inner_fit(m, pen, nearby, theta).iterations;
      const Matrix H0 = fit.J.matrix().inverse();
      warm_iterations = inner_fit(m, pen, nearby, fit.theta, {}, &H0).iterations;
    }
  }
  CHECK(prev <= 1e-3);
  MESSAGE("inner iterations at nearby lambda: cold " << cold_iterations << ", warm " << warm_iterations);
  WARN(warm_iterations < cold_iterations);
}
