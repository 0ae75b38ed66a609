#pragma once

// Minimal reverse-mode automatic differentiation on a scalar tape.
//
// A Var is a value plus its position on a Tape. Every elementary operation
// appends one node holding the local partial derivatives with respect to its
// parents; Tape::gradient runs one reverse sweep. Vars without a tape are
// constants. log_sum_exp is a single node with the softmax weights as its
// partials so that adjoints never see exp() of large arguments.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mshmm/linalg.hpp"

namespace mshmm::ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(double v) : value_(v) {}  // NOLINT: constants convert implicitly

  double value() const { return value_; }
  Tape* tape() const { return tape_; }
  std::ptrdiff_t index() const { return index_; }
  bool is_constant() const { return tape_ == nullptr; }

 private:
  friend class Tape;
  Var(double v, Tape* t, std::ptrdiff_t i) : value_(v), tape_(t), index_(i) {}

  double value_ = 0.0;
  Tape* tape_ = nullptr;
  std::ptrdiff_t index_ = -1;
};

class Tape {
 public:
  /// New independent variable.
  Var variable(double v);
  std::vector<Var> variables(const Vector& v);

  /// Node with the given value and (parent, partial) pairs; constant
  /// parents are skipped.
  Var node(double value, std::span<const Var> parents, std::span<const double> partials);
  Var node(double value, const Var& a, double da);
  Var node(double value, const Var& a, double da, const Var& b, double db);

  /// d output / d wrt[k] for each k.
  Vector gradient(const Var& output, std::span<const Var> wrt) const;

  std::size_t size() const { return begin_.size(); }
  void clear();

 private:
  std::vector<std::size_t> begin_;  // first edge of each node
  std::vector<std::ptrdiff_t> parent_;
  std::vector<double> weight_;
};

Tape* common_tape(const Var& a, const Var& b);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var& operator+=(Var& a, const Var& b);
Var& operator-=(Var& a, const Var& b);
Var& operator*=(Var& a, const Var& b);
Var& operator/=(Var& a, const Var& b);

Var exp(const Var& a);
Var log(const Var& a);
Var log1p(const Var& a);
Var sqrt(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var pow(const Var& a, double p);
Var lgamma(const Var& a);
/// log I0(x) with derivative I1(x)/I0(x).
Var log_bessel_i0(const Var& a);

/// log(sum_i exp(x_i)) as one node.
Var log_sum_exp(std::span<const Var> xs);

}  // namespace mshmm::ad

namespace mshmm {

/// Scalar helpers shared by the double and Var code paths.
double log_bessel_i0(double x);
/// I1(x) / I0(x).
double bessel_ratio_i1_i0(double x);
double digamma(double x);
double log_sum_exp(std::span<const double> xs);

}  // namespace mshmm
