#pragma once

// Penalized negative log-likelihood with exact gradients, and finite-difference
// Hessians of the gradient.

#include "mshmm/linalg.hpp"
#include "mshmm/penalty.hpp"

namespace mshmm {

/// Anything with a log-likelihood and its exact gradient in theta.
class LikelihoodModel {
 public:
  virtual ~LikelihoodModel() = default;
  virtual Index dim() const = 0;
  /// Number of observations used for BIC.
  virtual Index n_obs() const = 0;
  virtual double loglik(const Vector& theta) const = 0;
  /// Returns the log-likelihood and writes its gradient to grad.
  virtual double loglik_gradient(const Vector& theta, Vector& grad) const = 0;
};

/// Scalar function to be minimized.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual Index dim() const = 0;
  virtual double value(const Vector& x) const = 0;
  virtual double value_gradient(const Vector& x, Vector& grad) const = 0;
};

/// -l(theta) + theta^T S_lambda theta / 2.
class PenalizedObjective final : public Objective {
 public:
  PenalizedObjective(const LikelihoodModel& model, const PenaltyModel& penalties,
                     const Vector& lambda);

  Index dim() const override { return model_.dim(); }
  double value(const Vector& theta) const override;
  double value_gradient(const Vector& theta, Vector& grad) const override;

 private:
  const LikelihoodModel& model_;
  const PenaltyModel& penalties_;
  Vector lambda_;
};

struct ValueGradient {
  double value = 0.0;
  Vector gradient;
};

/// Penalized negative log-likelihood and its gradient.
ValueGradient grad_penalized_nll(const LikelihoodModel& model, const PenaltyModel& penalties,
                                 const Vector& lambda, const Vector& theta);

/// Central differences of the gradient with steps
/// h_i = step_scale * (1 + |x_i|), symmetrized. Uses 2 d gradient
/// evaluations, spread over the given number of threads.
SymMatrix fd_hessian(const Objective& f, const Vector& x, double step_scale, int threads = 1);

/// Default step scale, the cube root of machine epsilon.
double default_hessian_step();

/// J_lambda: finite-difference Hessian of -l plus S_lambda. Retries once with
/// a ten times larger step if the first attempt is not finite.
SymMatrix hessian_penalized(const LikelihoodModel& model, const PenaltyModel& penalties,
                            const Vector& lambda, const Vector& theta, int threads = 1);

}  // namespace mshmm
