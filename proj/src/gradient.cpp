#include "mshmm/gradient.hpp"

#include <cmath>
#include <limits>
#include <thread>
#include <vector>

#include "mshmm/errors.hpp"

namespace mshmm {

namespace {

class NegLoglik final : public Objective {
 public:
  explicit NegLoglik(const LikelihoodModel& m) : m_(m) {}
  Index dim() const override { return m_.dim(); }
  double value(const Vector& x) const override { return -m_.loglik(x); }
  double value_gradient(const Vector& x, Vector& g) const override {
    const double v = -m_.loglik_gradient(x, g);
    g = -g;
    return v;
  }

 private:
  const LikelihoodModel& m_;
};

}  // namespace

PenalizedObjective::PenalizedObjective(const LikelihoodModel& model, const PenaltyModel& penalties,
                                       const Vector& lambda)
    : model_(model), penalties_(penalties), lambda_(lambda) {
  if (penalties.dim() != model.dim()) {
    throw InvalidInput("penalized objective: penalty and model dimensions differ");
  }
}

double PenalizedObjective::value(const Vector& theta) const {
  return -model_.loglik(theta) + penalties_.value(lambda_, theta);
}

double PenalizedObjective::value_gradient(const Vector& theta, Vector& grad) const {
  const double ll = model_.loglik_gradient(theta, grad);
  const Vector s = penalties_.apply(lambda_, theta);
  grad = -grad + s;
  return -ll + 0.5 * theta.dot(s);
}

ValueGradient grad_penalized_nll(const LikelihoodModel& model, const PenaltyModel& penalties,
                                 const Vector& lambda, const Vector& theta) {
  if (!theta.allFinite()) throw InvalidInput("gradient: non-finite theta");
  PenalizedObjective f(model, penalties, lambda);
  ValueGradient out;
  out.value = f.value_gradient(theta, out.gradient);
  return out;
}

double default_hessian_step() { return std::cbrt(std::numeric_limits<double>::epsilon()); }

SymMatrix fd_hessian(const Objective& f, const Vector& x, double step_scale, int threads) {
  const Index d = x.size();
  Matrix H(d, d);
  auto column = [&](Index i) {
    const double h = step_scale * (1.0 + std::abs(x(i)));
    Vector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    Vector gp, gm;
    try {
      f.value_gradient(xp, gp);
      f.value_gradient(xm, gm);
    } catch (const Error&) {
      H.col(i).setConstant(std::numeric_limits<double>::quiet_NaN());
      return;
    }
    // Use the steps actually representable in floating point.
    H.col(i) = (gp - gm) / (xp(i) - xm(i));
  };
  if (threads <= 1 || d < 2) {
    for (Index i = 0; i < d; ++i) column(i);
  } else {
    std::vector<std::thread> pool;
    const int n = static_cast<int>(std::min<Index>(threads, d));
    for (int w = 0; w < n; ++w) {
      pool.emplace_back([&, w] {
        for (Index i = w; i < d; i += n) column(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  return SymMatrix::symmetrized(H);
}

SymMatrix hessian_penalized(const LikelihoodModel& model, const PenaltyModel& penalties,
                            const Vector& lambda, const Vector& theta, int threads) {
  NegLoglik nll(model);
  const SymMatrix S = penalties.assemble(lambda);
  double step = default_hessian_step();
  for (int attempt = 0; attempt < 2; ++attempt) {
    const SymMatrix H = fd_hessian(nll, theta, step, threads);
    if (H.matrix().allFinite()) return H + S;
    step *= 10.0;
  }
  throw InvalidInput("hessian: non-finite entries after retrying with a larger step");
}

}  // namespace mshmm
