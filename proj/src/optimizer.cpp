#include "mshmm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mshmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Point {
  double alpha = 0.0;
  double value = kInf;
  double slope = 0.0;
  Vector x;
  Vector grad;
  bool finite() const { return std::isfinite(value) && std::isfinite(slope); }
};

class LineSearch {
 public:
  LineSearch(const Objective& f, const Vector& x, const Vector& p, double f0, double d0,
             const BfgsOptions& opt, int& evals)
      : f_(f), x_(x), p_(p), f0_(f0), d0_(d0), opt_(opt), evals_(evals) {}

  // Returns true with an accepted point; `best` always holds the lowest
  // finite value seen that satisfies sufficient decrease.
  bool run(double alpha0, Point& out) {
    Point prev;
    prev.alpha = 0.0;
    prev.value = f0_;
    prev.slope = d0_;
    double alpha = alpha0;
    for (int i = 0; i < opt_.max_line_evals; ++i) {
      Point cur = eval(alpha);
      if (!cur.finite() || cur.value > f0_ + opt_.c1 * alpha * d0_ ||
          (i > 0 && cur.value >= prev.value)) {
        return zoom(prev, cur, out);
      }
      if (std::abs(cur.slope) <= -opt_.c2 * d0_) {
        out = cur;
        return true;
      }
      if (cur.slope >= 0) return zoom(cur, prev, out);
      prev = cur;
      alpha *= 2.0;
    }
    return fallback(out);
  }

 private:
  Point eval(double alpha) {
    Point pt;
    pt.alpha = alpha;
    pt.x = x_ + alpha * p_;
    ++evals_;
    try {
      pt.value = f_.value_gradient(pt.x, pt.grad);
      pt.slope = pt.grad.dot(p_);
      if (!pt.grad.allFinite()) pt.value = kInf;
    } catch (const Error&) {
      pt.value = kInf;
    }
    if (pt.finite() && pt.value <= f0_ + opt_.c1 * alpha * d0_ &&
        (!have_best_ || pt.value < best_.value)) {
      best_ = pt;
      have_best_ = true;
    }
    return pt;
  }

  bool zoom(Point lo, Point hi, Point& out) {
    for (int it = 0; it < opt_.max_line_evals; ++it) {
      const double a = lo.alpha, b = hi.alpha;
      const double lo_b = std::min(a, b), hi_b = std::max(a, b);
      const double width = hi_b - lo_b;
      if (width <= 1e-16 * std::max(1.0, hi_b)) break;
      double trial = 0.5 * (a + b);
      if (hi.finite()) {
        // Cubic interpolation through both end points.
        const double d1 = lo.slope + hi.slope - 3 * (lo.value - hi.value) / (a - b);
        const double disc = d1 * d1 - lo.slope * hi.slope;
        if (disc >= 0) {
          const double d2 = (b > a ? 1.0 : -1.0) * std::sqrt(disc);
          const double c = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2 * d2);
          if (std::isfinite(c)) trial = c;
        }
      }
      trial = std::clamp(trial, lo_b + 0.1 * width, hi_b - 0.1 * width);
      Point cur = eval(trial);
      if (!cur.finite() || cur.value > f0_ + opt_.c1 * trial * d0_ || cur.value >= lo.value) {
        hi = cur;
      } else {
        if (std::abs(cur.slope) <= -opt_.c2 * d0_) {
          out = cur;
          return true;
        }
        if (cur.slope * (hi.alpha - lo.alpha) >= 0) hi = lo;
        lo = cur;
      }
    }
    return fallback(out);
  }

  // Curvature condition unmet: accept the best sufficient-decrease point.
  bool fallback(Point& out) {
    if (!have_best_) return false;
    out = best_;
    return true;
  }

  const Objective& f_;
  const Vector& x_;
  const Vector& p_;
  double f0_, d0_;
  const BfgsOptions& opt_;
  int& evals_;
  Point best_;
  bool have_best_ = false;
};

bool small_gradient(const Vector& g, double f, double tol) {
  return g.cwiseAbs().maxCoeff() <= tol * (1.0 + std::abs(f));
}

}  // namespace

BfgsResult bfgs_minimize(const Objective& f, const Vector& x0, const BfgsOptions& opt,
                         const Matrix* H0) {
  const Index d = x0.size();
  BfgsResult r;
  r.x = x0;
  r.value = f.value_gradient(r.x, r.gradient);
  r.evaluations = 1;
  if (!std::isfinite(r.value) || !r.gradient.allFinite()) {
    throw InvalidInput("bfgs: objective is not finite at the starting point");
  }
  bool scaled = H0 != nullptr;
  Matrix H = H0 ? *H0 : Matrix::Identity(d, d);
  int failures = 0, stalled = 0;
  while (true) {
    if (d == 0 || small_gradient(r.gradient, r.value, opt.grad_tol)) {
      r.converged = true;
      r.message = "gradient tolerance reached";
      break;
    }
    if (r.iterations >= opt.max_iter) {
      r.message = "iteration limit reached";
      break;
    }
    Vector p = -H * r.gradient;
    double d0 = p.dot(r.gradient);
    if (!(d0 < 0)) {
      H.setIdentity();
      scaled = false;
      p = -r.gradient;
      d0 = p.dot(r.gradient);
    }
    const double alpha0 = scaled ? 1.0 : std::min(1.0, 1.0 / std::max(1e-300, p.cwiseAbs().maxCoeff()));
    LineSearch ls(f, r.x, p, r.value, d0, opt, r.evaluations);
    Point next;
    if (!ls.run(alpha0, next)) {
      ++failures;
      ++r.restarts;
      if (failures > opt.max_restarts) {
        r.message = "line search failed after restarts";
        break;
      }
      H.setIdentity();
      scaled = false;
      continue;
    }
    failures = 0;
    const Vector s = next.x - r.x;
    const Vector y = next.grad - r.gradient;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        H = (sy / y.squaredNorm()) * Matrix::Identity(d, d);
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Vector Hy = H * y;
      // (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded.
      H += rho * ((1.0 + rho * y.dot(Hy)) * (s * s.transpose()) - (Hy * s.transpose()) -
                  (s * Hy.transpose()));
      H = 0.5 * (H + H.transpose()).eval();
    }
    stalled = r.value - next.value <= opt.stall_tol * (1.0 + std::abs(r.value)) ? stalled + 1 : 0;
    r.x = next.x;
    r.value = next.value;
    r.gradient = next.grad;
    ++r.iterations;
    if (stalled >= opt.stall_iterations) {
      r.message = "no decrease over " + std::to_string(stalled) + " iterations";
      break;
    }
  }
  r.inv_hessian = H;
  return r;
}

InnerFit inner_fit(const LikelihoodModel& model, const PenaltyModel& penalties,
                   const Vector& lambda, const Vector& theta_start, const InnerOptions& opt,
                   const Matrix* H0) {
  if (!theta_start.allFinite()) throw InvalidInput("inner fit: non-finite starting point");
  PenalizedObjective f(model, penalties, lambda);
  const BfgsResult b = bfgs_minimize(f, theta_start, opt.bfgs, H0);
  SymMatrix J = hessian_penalized(model, penalties, lambda, b.x, opt.threads);
  const bool pd = is_positive_definite(J);
  if (!b.converged) {
    const double decrement = pd ? 0.5 * b.gradient.dot(J.matrix().llt().solve(b.gradient))
                                : std::numeric_limits<double>::infinity();
    if (!(decrement <= opt.decrement_tol)) {
      throw InnerConvergenceError("inner fit: " + b.message, b.x, b.value);
    }
  }
  InnerFit out;
  out.theta = b.x;
  out.objective = b.value;
  out.loglik = model.loglik(b.x);
  out.gradient = b.gradient;
  out.inv_hessian = b.inv_hessian;
  out.iterations = b.iterations;
  out.evaluations = b.evaluations;
  if (!pd) {
    J = nearest_pd(J);
    out.J_corrected = true;
  }
  out.J = J;
  return out;
}

}  // namespace mshmm
