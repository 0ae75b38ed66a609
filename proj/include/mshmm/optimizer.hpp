#pragma once

// BFGS with a strong-Wolfe line search, and the inner penalized fit.

#include <string>

#include "mshmm/errors.hpp"
#include "mshmm/gradient.hpp"

namespace mshmm {

struct BfgsOptions {
  /// Stop when max |grad| <= grad_tol * (1 + |f|).
  double grad_tol = 1e-7;
  int max_iter = 500;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_restarts = 2;
  int max_line_evals = 40;
  /// Stop (unconverged) after this many consecutive iterations whose decrease
  /// is at most stall_tol * (1 + |f|).
  int stall_iterations = 5;
  double stall_tol = 1e-14;
};

struct BfgsResult {
  Vector x;
  double value = 0.0;
  Vector gradient;
  Matrix inv_hessian;
  int iterations = 0;
  int evaluations = 0;
  int restarts = 0;
  bool converged = false;
  std::string message;
};

/// Minimizes f from x0. H0, when given, is the initial inverse Hessian.
BfgsResult bfgs_minimize(const Objective& f, const Vector& x0, const BfgsOptions& opt = {},
                         const Matrix* H0 = nullptr);

struct InnerOptions {
  BfgsOptions bfgs;
  /// An unconverged BFGS result is accepted when the Newton decrement
  /// g^T J^-1 g / 2 under the penalized Hessian is at most this.
  double decrement_tol = 1e-6;
  int threads = 1;
};

struct InnerFit {
  Vector theta;
  double objective = 0.0;  // -l + theta^T S theta / 2
  double loglik = 0.0;
  Vector gradient;
  SymMatrix J;
  bool J_corrected = false;  // replaced by its nearest positive definite matrix
  Matrix inv_hessian;        // final BFGS approximation
  int iterations = 0;
  int evaluations = 0;
};

/// Inner fit did not converge; carries the best point found.
class InnerConvergenceError : public ConvergenceError {
 public:
  InnerConvergenceError(const std::string& what, Vector best, double value)
      : ConvergenceError(what), best_(std::move(best)), value_(value) {}
  const Vector& best() const { return best_; }
  double value() const { return value_; }

 private:
  Vector best_;
  double value_;
};

/// Maximizes the penalized log-likelihood for fixed lambda and returns the
/// optimum with the penalized Hessian J_lambda.
InnerFit inner_fit(const LikelihoodModel& model, const PenaltyModel& penalties,
                   const Vector& lambda, const Vector& theta_start, const InnerOptions& opt = {},
                   const Matrix* H0 = nullptr);

}  // namespace mshmm
