#include "mshmm/qreml.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "mshmm/errors.hpp"

namespace mshmm {

namespace {

double max_abs(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

Matrix inverse_spd(const SymMatrix& J) {
  return solve_spd(J, Matrix::Identity(J.dim(), J.dim()));
}

// One Newton step on the penalized objective using J, to tighten an inner
// optimum before differencing in lambda.
Vector newton_polish(const LikelihoodModel& model, const PenaltyModel& penalties,
                     const Vector& lambda, const Vector& theta, const SymMatrix& J) {
  const ValueGradient vg = grad_penalized_nll(model, penalties, lambda, theta);
  const Vector step = solve_spd(J, vg.gradient);
  const Vector cand = theta - step;
  try {
    const ValueGradient vc = grad_penalized_nll(model, penalties, lambda, cand);
    if (std::isfinite(vc.value) && max_abs(vc.gradient) < max_abs(vg.gradient)) return cand;
  } catch (const Error&) {
  }
  return theta;
}

}  // namespace

LambdaMap LambdaMap::identity(std::size_t blocks) {
  LambdaMap m;
  for (std::size_t j = 0; j < blocks; ++j) m.group.push_back(static_cast<int>(j));
  m.n_groups = static_cast<int>(blocks);
  return m;
}

LambdaMap LambdaMap::from_labels(const std::vector<int>& labels) {
  LambdaMap m;
  std::map<int, int> ids;
  for (int l : labels) {
    if (l == kFixed) {
      m.group.push_back(kFixed);
      continue;
    }
    auto it = ids.find(l);
    if (it == ids.end()) it = ids.emplace(l, static_cast<int>(ids.size())).first;
    m.group.push_back(it->second);
  }
  m.n_groups = static_cast<int>(ids.size());
  return m;
}

std::vector<std::size_t> LambdaMap::members(int g) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < group.size(); ++j) {
    if (group[j] == g) out.push_back(j);
  }
  return out;
}

Vector LambdaMap::collapse(const Vector& lambda) const {
  Vector out(n_groups);
  for (int g = 0; g < n_groups; ++g) out(g) = lambda(static_cast<Index>(members(g).front()));
  return out;
}

void LambdaMap::expand(const Vector& groups, Vector& lambda) const {
  for (std::size_t j = 0; j < group.size(); ++j) {
    if (group[j] != kFixed) lambda(static_cast<Index>(j)) = groups(group[j]);
  }
}

void LambdaMap::validate(std::size_t blocks) const {
  if (group.size() != blocks) throw InvalidInput("lambda map: one entry per penalty block required");
  for (int g : group) {
    if (g != kFixed && (g < 0 || g >= n_groups)) throw InvalidInput("lambda map: bad group id");
  }
  for (int g = 0; g < n_groups; ++g) {
    if (members(g).empty()) throw InvalidInput("lambda map: empty group");
  }
}

OuterTerms outer_terms(const PenaltyModel& penalties, const LambdaMap& map, const Vector& lambda,
                       const Vector& theta, const SymMatrix& J, double rank_tol) {
  map.validate(penalties.size());
  OuterTerms t;
  t.inverse = penalties.inverse(lambda, rank_tol);
  const Vector trp = penalties.trace_pinv(t.inverse);
  const Vector trj = penalties.trace_with(inverse_spd(J));
  const Vector q = penalties.quadratic_forms(theta);
  const int G = map.n_groups;
  t.q = Vector::Zero(G);
  t.tr_pinv = Vector::Zero(G);
  t.tr_jinv = Vector::Zero(G);
  t.lambda = map.collapse(lambda);
  for (std::size_t j = 0; j < map.group.size(); ++j) {
    const int g = map.group[j];
    if (g == LambdaMap::kFixed) continue;
    const Index k = static_cast<Index>(j);
    t.q(g) += q(k);
    t.tr_pinv(g) += trp(k);
    t.tr_jinv(g) += trj(k);
  }
  t.gradient = 0.5 * (t.tr_pinv - t.tr_jinv - t.q);
  return t;
}

Vector outer_gradient(const PenaltyModel& penalties, const LambdaMap& map, const Vector& lambda,
                      const Vector& theta, const SymMatrix& J) {
  return outer_terms(penalties, map, lambda, theta, J).gradient;
}

LambdaProposal lambda_update(const OuterTerms& t, const UpdateOptions& opt) {
  const Index G = t.lambda.size();
  LambdaProposal p;
  p.groups.resize(G);
  p.capped.assign(static_cast<std::size_t>(G), false);
  p.fallback.assign(static_cast<std::size_t>(G), false);
  for (Index g = 0; g < G; ++g) {
    const double num = t.tr_pinv(g) - t.tr_jinv(g);
    double v;
    if (t.q(g) <= opt.q_floor) {
      v = opt.lambda_cap;
      p.capped[static_cast<std::size_t>(g)] = true;
    } else if (!(num > 0)) {
      v = 0.1 * t.lambda(g);
      p.fallback[static_cast<std::size_t>(g)] = true;
    } else {
      v = t.lambda(g) * num / t.q(g);
    }
    if (v > opt.lambda_cap) {
      v = opt.lambda_cap;
      p.capped[static_cast<std::size_t>(g)] = true;
    }
    p.groups(g) = std::max(v, opt.lambda_floor);
  }
  return p;
}

namespace {

double restricted_common(double loglik, double sign, const PenaltyModel& penalties,
                         const Vector& lambda, const Vector& theta, const SymMatrix& J,
                         double rank_tol) {
  double lp = 0.0;
  Index rank = 0;
  if (penalties.size() > 0) {
    const PenaltyInverse inv = penalties.inverse(lambda, rank_tol);
    lp = inv.log_pdet;
    rank = inv.rank;
  }
  const double quad = 2.0 * penalties.value(lambda, theta);
  const double d = static_cast<double>(theta.size());
  return loglik + sign * 0.5 * quad + 0.5 * lp - 0.5 * log_det_spd(J) +
         0.5 * (d - static_cast<double>(rank)) * std::log(2.0 * std::numbers::pi);
}

}  // namespace

double restricted_loglik_value(double loglik, const PenaltyModel& penalties, const Vector& lambda,
                               const Vector& theta, const SymMatrix& J, double rank_tol) {
  return restricted_common(loglik, -1.0, penalties, lambda, theta, J, rank_tol);
}

double restricted_loglik_value_plus(double loglik, const PenaltyModel& penalties,
                                    const Vector& lambda, const Vector& theta, const SymMatrix& J,
                                    double rank_tol) {
  return restricted_common(loglik, 1.0, penalties, lambda, theta, J, rank_tol);
}

std::string to_string(FitStatus s) {
  switch (s) {
    case FitStatus::converged:
      return "converged";
    case FitStatus::inner_failure:
      return "inner_failure";
    case FitStatus::outer_nonconvergence:
      return "outer_nonconvergence";
    case FitStatus::oscillation:
      return "oscillation";
  }
  return "?";
}

double effective_df(const SymMatrix& J, const SymMatrix& S) {
  return static_cast<double>(J.dim()) - trace_product(inverse_spd(J), S.matrix());
}

void fill_criteria(FitResult& fit, const PenaltyModel& penalties) {
  const SymMatrix S = penalties.size() ? penalties.assemble(fit.lambda) : SymMatrix::zero(fit.theta.size());
  fit.edf = effective_df(fit.J, S);
  fit.aic = -2.0 * fit.loglik + 2.0 * fit.edf;
  fit.bic = -2.0 * fit.loglik + std::log(static_cast<double>(fit.n_obs)) * fit.edf;
}

FitResult qreml(const LikelihoodModel& model, const PenaltyModel& penalties, const LambdaMap& map,
                const Vector& lambda0, const Vector& theta0, const QremlOptions& opt) {
  map.validate(penalties.size());
  if (lambda0.size() != static_cast<Index>(penalties.size()) || (lambda0.array() <= 0).any()) {
    throw InvalidInput("qreml: need a positive initial lambda per penalty block");
  }
  if (!(opt.alpha >= 0 && opt.alpha < 1)) throw InvalidInput("qreml: alpha must lie in [0, 1)");
  FitResult fit;
  fit.map = map;
  fit.n_obs = model.n_obs();
  fit.lambda = lambda0;
  Vector theta = theta0;
  Matrix H0;
  std::vector<double> history, restricted;
  std::vector<Vector> grads;
  bool done = false;
  for (int k = 0; k < opt.max_outer; ++k) {
    InnerFit inner;
    try {
      inner = inner_fit(model, penalties, fit.lambda, theta, opt.inner,
                        opt.warm_hessian && H0.size() ? &H0 : nullptr);
    } catch (const InnerConvergenceError& e) {
      fit.status = FitStatus::inner_failure;
      fit.message = e.what();
      fit.theta = e.best();
      return fit;
    }
    fit.inner_iterations += inner.iterations;
    fit.theta = inner.theta;
    fit.J = inner.J;
    fit.J_corrected = inner.J_corrected;
    fit.loglik = inner.loglik;
    fit.penalized_loglik = -inner.objective;

    OuterIteration it;
    it.lambda = fit.lambda;
    it.inner_iterations = inner.iterations;
    it.loglik = inner.loglik;
    it.J_corrected = inner.J_corrected;
    OuterTerms terms;
    if (penalties.size() > 0) {
      terms = outer_terms(penalties, map, fit.lambda, fit.theta, fit.J, opt.rank_tol);
      fit.penalty_rank = terms.inverse.rank;
    } else {
      terms.gradient = Vector();
    }
    it.gradient = terms.gradient;
    it.restricted_loglik =
        restricted_loglik_value(inner.loglik, penalties, fit.lambda, fit.theta, fit.J, opt.rank_tol);
    fit.restricted_loglik = it.restricted_loglik;
    fit.outer_gradient = terms.gradient;
    const double gmax = max_abs(terms.gradient);

    LambdaProposal prop;
    double change = 0.0;
    if (map.n_groups > 0) {
      prop = lambda_update(terms, opt.update);
      change = ((prop.groups - terms.lambda).array().abs() / terms.lambda.array()).maxCoeff();
    }
    if (gmax < opt.tol && change < opt.fixed_point_tol) {
      fit.trace.iterations.push_back(it);
      fit.status = FitStatus::converged;
      fit.message = "outer gradient below tolerance";
      done = true;
      break;
    }
    history.push_back(gmax);
    restricted.push_back(it.restricted_loglik);
    grads.push_back(terms.gradient);
    const int w = opt.oscillation_window;
    const std::size_t n = history.size();
    if (w > 0 && n > static_cast<std::size_t>(w)) {
      const double before = history[n - 1 - static_cast<std::size_t>(w)];
      const double best = *std::min_element(history.end() - w, history.end());
      const double r0 = restricted[n - 1 - static_cast<std::size_t>(w)];
      const double r1 = *std::max_element(restricted.end() - w, restricted.end());
      const bool stalled = !(r1 > r0 + 1e-10 * (1.0 + std::abs(r0)));
      bool flip = false;
      for (std::size_t a = n - static_cast<std::size_t>(w); a < n && !flip; ++a) {
        for (Index g = 0; g < grads[a].size(); ++g) {
          const bool active = std::abs(grads[a](g)) >= opt.tol || std::abs(grads[a - 1](g)) >= opt.tol;
          if (active && grads[a](g) * grads[a - 1](g) < 0) flip = true;
        }
      }
      if (best >= before && stalled && flip) {
        fit.trace.iterations.push_back(it);
        fit.status = FitStatus::oscillation;
        fit.message = "outer gradient did not decrease over " + std::to_string(w) +
                      " iterations while the restricted likelihood stalled and smoothing parameters changed direction";
        done = true;
        break;
      }
    }
    it.capped = prop.capped;
    it.fallback = prop.fallback;
    fit.trace.iterations.push_back(it);
    const Vector next = (1.0 - opt.alpha) * prop.groups + opt.alpha * terms.lambda;
    map.expand(next, fit.lambda);
    theta = fit.theta;
    if (opt.warm_hessian) H0 = inverse_spd(fit.J);
  }
  if (!done) {
    fit.status = FitStatus::outer_nonconvergence;
    fit.message = "outer iteration limit reached";
  }
  fill_criteria(fit, penalties);
  return fit;
}

OuterCovariance sdreport_outer(const LikelihoodModel& model, const PenaltyModel& penalties,
                               const FitResult& fit, const QremlOptions& opt, double rel_step) {
  const LambdaMap& map = fit.map;
  const int G = map.n_groups;
  OuterCovariance out;
  if (G == 0) {
    out.message = "no free smoothing parameters";
    return out;
  }
  const Vector rho = map.collapse(fit.lambda);
  const Vector base_theta = newton_polish(model, penalties, fit.lambda, fit.theta, fit.J);
  const Vector g0 = outer_gradient(penalties, map, fit.lambda, base_theta, fit.J);
  const Matrix H0 = inverse_spd(fit.J);
  InnerOptions inner = opt.inner;
  out.hessian.resize(G, G);
  for (int g = 0; g < G; ++g) {
    Vector r = rho;
    const double h = rel_step * rho(g);
    r(g) += h;
    Vector lambda = fit.lambda;
    map.expand(r, lambda);
    const InnerFit f = inner_fit(model, penalties, lambda, fit.theta, inner, &H0);
    ++out.refits;
    const Vector th = newton_polish(model, penalties, lambda, f.theta, f.J);
    const Vector g1 = outer_gradient(penalties, map, lambda, th, f.J);
    out.hessian.col(g) = (g1 - g0) / (r(g) - rho(g));
  }
  out.hessian = 0.5 * (out.hessian + out.hessian.transpose()).eval();
  const SymMatrix negH = SymMatrix::symmetrized(-out.hessian);
  out.se_lambda = Vector::Constant(G, std::numeric_limits<double>::quiet_NaN());
  if (is_positive_definite(negH)) {
    out.invertible = true;
    out.cov_lambda = solve_spd(negH, Matrix::Identity(G, G));
    out.se_lambda = out.cov_lambda.diagonal().cwiseSqrt();
  } else {
    out.message = "outer Hessian is not negative definite; standard errors from diagonal curvature";
    out.cov_lambda = Matrix::Constant(G, G, std::numeric_limits<double>::quiet_NaN());
    for (int g = 0; g < G; ++g) {
      if (out.hessian(g, g) < 0) out.se_lambda(g) = std::sqrt(-1.0 / out.hessian(g, g));
    }
  }
  out.var_sigma2 = out.se_lambda.array().square() / rho.array().pow(4);
  out.se_sigma2 = out.var_sigma2.cwiseSqrt();
  return out;
}

}  // namespace mshmm
