#include "mshmm/ad.hpp"

#include <algorithm>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <limits>
#include <numbers>

#include "mshmm/errors.hpp"

namespace mshmm {

double log_bessel_i0(double x) {
  x = std::abs(x);
  if (x < 500.0) return std::log(boost::math::cyl_bessel_i(0, x));
  // Large-argument expansion of exp(-x) I0(x).
  const double r = 1.0 / (8.0 * x);
  const double series = 1.0 + r * (1.0 + r * (9.0 / 2.0 + r * (225.0 / 6.0)));
  return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(series);
}

double bessel_ratio_i1_i0(double x) {
  const double ax = std::abs(x);
  double r;
  if (ax < 500.0) {
    r = boost::math::cyl_bessel_i(1, ax) / boost::math::cyl_bessel_i(0, ax);
  } else {
    const double u = 1.0 / ax;
    r = 1.0 - 0.5 * u - 0.125 * u * u - 0.125 * u * u * u;
  }
  return x < 0 ? -r : r;
}

double digamma(double x) { return boost::math::digamma(x); }

double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace mshmm

namespace mshmm::ad {

Var Tape::variable(double v) {
  begin_.push_back(parent_.size());
  return Var(v, this, static_cast<std::ptrdiff_t>(begin_.size() - 1));
}

std::vector<Var> Tape::variables(const Vector& v) {
  std::vector<Var> out;
  out.reserve(v.size());
  for (Index i = 0; i < v.size(); ++i) out.push_back(variable(v(i)));
  return out;
}

Var Tape::node(double value, std::span<const Var> parents, std::span<const double> partials) {
  begin_.push_back(parent_.size());
  for (std::size_t k = 0; k < parents.size(); ++k) {
    if (parents[k].is_constant()) continue;
    parent_.push_back(parents[k].index());
    weight_.push_back(partials[k]);
  }
  return Var(value, this, static_cast<std::ptrdiff_t>(begin_.size() - 1));
}

Var Tape::node(double value, const Var& a, double da) {
  const Var ps[1] = {a};
  const double ws[1] = {da};
  return node(value, ps, ws);
}

Var Tape::node(double value, const Var& a, double da, const Var& b, double db) {
  const Var ps[2] = {a, b};
  const double ws[2] = {da, db};
  return node(value, ps, ws);
}

Vector Tape::gradient(const Var& output, std::span<const Var> wrt) const {
  Vector g = Vector::Zero(static_cast<Index>(wrt.size()));
  if (output.is_constant()) return g;
  if (output.tape() != this) throw InvalidInput("ad: output recorded on another tape");
  std::vector<double> adj(begin_.size(), 0.0);
  adj[output.index()] = 1.0;
  for (std::ptrdiff_t n = output.index(); n >= 0; --n) {
    const double a = adj[n];
    if (a == 0.0) continue;
    const std::size_t end = static_cast<std::size_t>(n) + 1 < begin_.size() ? begin_[n + 1]
                                                                           : parent_.size();
    for (std::size_t e = begin_[n]; e < end; ++e) adj[parent_[e]] += weight_[e] * a;
  }
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    if (!wrt[k].is_constant()) g(static_cast<Index>(k)) = adj[wrt[k].index()];
  }
  return g;
}

void Tape::clear() {
  begin_.clear();
  parent_.clear();
  weight_.clear();
}

Tape* common_tape(const Var& a, const Var& b) {
  if (a.tape() && b.tape() && a.tape() != b.tape()) {
    throw InvalidInput("ad: operands recorded on different tapes");
  }
  return a.tape() ? a.tape() : b.tape();
}

namespace {

template <class F>
Var unary(const Var& a, double value, F&& partial) {
  if (a.is_constant()) return Var(value);
  return a.tape()->node(value, a, partial());
}

Var binary(const Var& a, const Var& b, double value, double da, double db) {
  Tape* t = common_tape(a, b);
  if (t == nullptr) return Var(value);
  return t->node(value, a, da, b, db);
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  return binary(a, b, a.value() + b.value(), 1.0, 1.0);
}
Var operator-(const Var& a, const Var& b) {
  return binary(a, b, a.value() - b.value(), 1.0, -1.0);
}
Var operator*(const Var& a, const Var& b) {
  return binary(a, b, a.value() * b.value(), b.value(), a.value());
}
Var operator/(const Var& a, const Var& b) {
  const double q = a.value() / b.value();
  return binary(a, b, q, 1.0 / b.value(), -q / b.value());
}
Var operator-(const Var& a) {
  return unary(a, -a.value(), [] { return -1.0; });
}
Var& operator+=(Var& a, const Var& b) { return a = a + b; }
Var& operator-=(Var& a, const Var& b) { return a = a - b; }
Var& operator*=(Var& a, const Var& b) { return a = a * b; }
Var& operator/=(Var& a, const Var& b) { return a = a / b; }

Var exp(const Var& a) {
  const double v = std::exp(a.value());
  return unary(a, v, [v] { return v; });
}
Var log(const Var& a) {
  return unary(a, std::log(a.value()), [&a] { return 1.0 / a.value(); });
}
Var log1p(const Var& a) {
  return unary(a, std::log1p(a.value()), [&a] { return 1.0 / (1.0 + a.value()); });
}
Var sqrt(const Var& a) {
  const double v = std::sqrt(a.value());
  return unary(a, v, [v] { return 0.5 / v; });
}
Var sin(const Var& a) {
  return unary(a, std::sin(a.value()), [&a] { return std::cos(a.value()); });
}
Var cos(const Var& a) {
  return unary(a, std::cos(a.value()), [&a] { return -std::sin(a.value()); });
}
Var pow(const Var& a, double p) {
  return unary(a, std::pow(a.value(), p), [&a, p] { return p * std::pow(a.value(), p - 1.0); });
}
Var lgamma(const Var& a) {
  return unary(a, std::lgamma(a.value()), [&a] { return mshmm::digamma(a.value()); });
}
Var log_bessel_i0(const Var& a) {
  return unary(a, mshmm::log_bessel_i0(a.value()),
               [&a] { return mshmm::bessel_ratio_i1_i0(a.value()); });
}

Var log_sum_exp(std::span<const Var> xs) {
  std::vector<double> vals;
  vals.reserve(xs.size());
  Tape* tape = nullptr;
  for (const auto& x : xs) {
    vals.push_back(x.value());
    if (x.tape()) tape = x.tape();
  }
  const double v = mshmm::log_sum_exp(vals);
  if (tape == nullptr) return Var(v);
  std::vector<double> w(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    w[i] = std::isfinite(v) ? std::exp(vals[i] - v) : 0.0;
  }
  return tape->node(v, xs, w);
}

}  // namespace mshmm::ad
