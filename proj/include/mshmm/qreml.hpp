#pragma once

// Smoothing-parameter selection by the extended Fellner-Schall update,
// restricted log-likelihood, and outer uncertainty quantification.

#include <string>
#include <vector>

#include "mshmm/optimizer.hpp"
#include "mshmm/penalty.hpp"

namespace mshmm {

/// Assignment of penalty blocks to shared smoothing parameters. group[j] is
/// a group id in 0..n_groups-1, or kFixed to hold block j at its initial
/// value.
struct LambdaMap {
  static constexpr int kFixed = -1;
  std::vector<int> group;
  int n_groups = 0;

  /// One free group per block.
  static LambdaMap identity(std::size_t blocks);
  /// Builds from arbitrary labels (equal labels share a group, kFixed fixes);
  /// group ids are renumbered in order of first appearance.
  static LambdaMap from_labels(const std::vector<int>& labels);

  /// Blocks of group g.
  std::vector<std::size_t> members(int g) const;
  /// Per-group value (the first member's lambda).
  Vector collapse(const Vector& lambda) const;
  /// Writes group values into the free blocks of lambda.
  void expand(const Vector& groups, Vector& lambda) const;
  void validate(std::size_t blocks) const;
};

/// Terms of the update for each free group, summed over members.
struct OuterTerms {
  Vector q;           // sum of theta^T S_j theta
  Vector tr_pinv;     // sum of tr(S_lambda^- S_j)
  Vector tr_jinv;     // sum of tr(J^{-1} S_j)
  Vector lambda;      // current group values
  Vector gradient;    // -q/2 + tr_pinv/2 - tr_jinv/2
  PenaltyInverse inverse;
};

OuterTerms outer_terms(const PenaltyModel& penalties, const LambdaMap& map, const Vector& lambda,
                       const Vector& theta, const SymMatrix& J,
                       double rank_tol = kDefaultRankTol);

/// Truncated restricted-likelihood gradient, one entry per free group.
Vector outer_gradient(const PenaltyModel& penalties, const LambdaMap& map, const Vector& lambda,
                      const Vector& theta, const SymMatrix& J);

struct UpdateOptions {
  double q_floor = 1e-12;
  double lambda_cap = 1e7;
  double lambda_floor = 1e-8;
};

struct LambdaProposal {
  Vector groups;                // proposed value per free group
  std::vector<bool> capped;     // q below q_floor, or proposal above the cap
  std::vector<bool> fallback;   // non-positive numerator
};

/// lambda* = lambda (tr(S^- S_j) - tr(J^{-1} S_j)) / q_j per free group.
LambdaProposal lambda_update(const OuterTerms& terms, const UpdateOptions& opt = {});

/// l(theta) - theta^T S theta / 2 + log|S|_+ / 2 - log|J| / 2
/// + (d - rank S)/2 log(2 pi).
double restricted_loglik_value(double loglik, const PenaltyModel& penalties, const Vector& lambda,
                               const Vector& theta, const SymMatrix& J,
                               double rank_tol = kDefaultRankTol);

/// The same expression with +theta^T S theta / 2, as printed in the source
/// formula. Kept for the sign check against the Gaussian closed form.
double restricted_loglik_value_plus(double loglik, const PenaltyModel& penalties,
                                    const Vector& lambda, const Vector& theta, const SymMatrix& J,
                                    double rank_tol = kDefaultRankTol);

struct OuterIteration {
  Vector lambda;      // per block
  Vector gradient;    // per free group
  int inner_iterations = 0;
  double restricted_loglik = 0.0;
  double loglik = 0.0;
  bool J_corrected = false;
  std::vector<bool> capped;
  std::vector<bool> fallback;
};

struct OuterTrace {
  std::vector<OuterIteration> iterations;
};

enum class FitStatus { converged, inner_failure, outer_nonconvergence, oscillation };

std::string to_string(FitStatus s);

struct QremlOptions {
  double alpha = 0.3;
  double tol = 1e-4;
  int max_outer = 200;
  /// Convergence also needs max |lambda* - lambda| / lambda below this, since
  /// the gradient scales with 1/lambda^2 and is small at any large lambda.
  double fixed_point_tol = 1e-2;
  /// Oscillation: over this many iterations the gradient max-norm and the
  /// restricted likelihood fail to improve while an active gradient component
  /// changes sign.
  int oscillation_window = 10;
  UpdateOptions update;
  InnerOptions inner;
  double rank_tol = kDefaultRankTol;
  /// Start each inner fit from J^{-1} of the previous outer iteration.
  bool warm_hessian = true;
};

struct FitResult {
  FitStatus status = FitStatus::converged;
  std::string message;
  Vector theta;
  Vector lambda;  // per block
  LambdaMap map;
  SymMatrix J;
  bool J_corrected = false;
  double loglik = 0.0;
  double penalized_loglik = 0.0;
  double restricted_loglik = 0.0;
  double edf = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  Index n_obs = 0;
  Index penalty_rank = 0;
  Vector outer_gradient;  // per free group, at the final lambda
  OuterTrace trace;
  int inner_iterations = 0;

  bool converged() const { return status == FitStatus::converged; }
};

/// edf = d - tr(J^{-1} S_lambda), i.e. tr(J^{-1} H).
double effective_df(const SymMatrix& J, const SymMatrix& S);

/// Fills edf and the conditional information criteria of a fit.
void fill_criteria(FitResult& fit, const PenaltyModel& penalties);

/// Alternates inner fits and damped Fellner-Schall updates until the
/// largest absolute outer gradient falls below opt.tol.
FitResult qreml(const LikelihoodModel& model, const PenaltyModel& penalties, const LambdaMap& map,
                const Vector& lambda0, const Vector& theta0, const QremlOptions& opt = {});

struct OuterCovariance {
  Matrix hessian;      // d^2 l_r / d lambda^2 per free group
  Matrix cov_lambda;   // -hessian^{-1}
  Vector se_lambda;
  Vector var_sigma2;   // delta method, lambda^-4 Var(lambda)
  Vector se_sigma2;
  bool invertible = false;
  int refits = 0;
  std::string message;
};

/// Forward differences of the truncated outer gradient, one warm-started
/// refit per free group with step rel_step * lambda_g.
OuterCovariance sdreport_outer(const LikelihoodModel& model, const PenaltyModel& penalties,
                               const FitResult& fit, const QremlOptions& opt = {},
                               double rel_step = 1e-4);

}  // namespace mshmm
