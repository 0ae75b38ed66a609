#include "mshmm/penalty.hpp"

#include <cmath>

#include "mshmm/errors.hpp"

namespace mshmm {

PenaltyModel::PenaltyModel(std::vector<PenaltyBlock> blocks, Index dim)
    : blocks_(std::move(blocks)), dim_(dim) {
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const PenaltyBlock& b = blocks_[j];
    if (b.size() == 0 || b.start < 0 || b.end() > dim_) {
      throw InvalidInput("penalty '" + b.label + "': range outside the coefficient vector");
    }
    const EigenFactorization ef = eigen_sym(b.S);
    const double top = std::max(ef.eigenvalues(0), 0.0);
    if (ef.eigenvalues(ef.eigenvalues.size() - 1) < -1e-10 * std::max(top, 1.0)) {
      throw InvalidInput("penalty '" + b.label + "' is not positive semi-definite");
    }
    std::size_t g = 0;
    for (; g < groups_.size(); ++g) {
      const RangeGroup& rg = groups_[g];
      if (rg.start == b.start && rg.size == b.size()) break;
      const bool disjoint = b.end() <= rg.start || rg.start + rg.size <= b.start;
      if (!disjoint) {
        throw InvalidInput("penalty '" + b.label + "' partially overlaps another block");
      }
    }
    if (g == groups_.size()) groups_.push_back({b.start, b.size(), {}});
    groups_[g].blocks.push_back(j);
    group_of_.push_back(g);
  }
}

Vector PenaltyModel::default_lambda() const {
  Vector l(static_cast<Index>(blocks_.size()));
  for (std::size_t j = 0; j < blocks_.size(); ++j) l(static_cast<Index>(j)) = blocks_[j].default_lambda;
  return l;
}

void PenaltyModel::check_lambda(const Vector& lambda) const {
  if (lambda.size() != static_cast<Index>(blocks_.size())) {
    throw InvalidInput("penalty: need one lambda per block");
  }
  if (!lambda.allFinite() || (lambda.array() < 0).any()) {
    throw InvalidInput("penalty: lambda must be finite and non-negative");
  }
}

SymMatrix PenaltyModel::assemble(const Vector& lambda) const {
  check_lambda(lambda);
  Matrix S = Matrix::Zero(dim_, dim_);
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const auto& b = blocks_[j];
    S.block(b.start, b.start, b.size(), b.size()) += lambda(static_cast<Index>(j)) * b.S.matrix();
  }
  return SymMatrix::symmetrized(S);
}

Vector PenaltyModel::apply(const Vector& lambda, const Vector& theta) const {
  check_lambda(lambda);
  Vector out = Vector::Zero(dim_);
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const auto& b = blocks_[j];
    out.segment(b.start, b.size()) +=
        lambda(static_cast<Index>(j)) * (b.S.matrix() * theta.segment(b.start, b.size()));
  }
  return out;
}

Vector PenaltyModel::quadratic_forms(const Vector& theta) const {
  if (theta.size() != dim_) throw InvalidInput("penalty: theta has the wrong length");
  Vector q(static_cast<Index>(blocks_.size()));
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const auto& b = blocks_[j];
    const auto seg = theta.segment(b.start, b.size());
    const double v = seg.dot(b.S.matrix() * seg);
    if (v < -1e-10) throw InvalidInput("penalty '" + b.label + "': negative quadratic form");
    q(static_cast<Index>(j)) = std::max(v, 0.0);
  }
  return q;
}

double PenaltyModel::value(const Vector& lambda, const Vector& theta) const {
  check_lambda(lambda);
  return 0.5 * lambda.dot(quadratic_forms(theta));
}

PenaltyInverse PenaltyModel::inverse(const Vector& lambda, double rank_tol) const {
  check_lambda(lambda);
  PenaltyInverse out;
  for (const auto& g : groups_) {
    Matrix Sg = Matrix::Zero(g.size, g.size);
    for (std::size_t j : g.blocks) Sg += lambda(static_cast<Index>(j)) * blocks_[j].S.matrix();
    const SymMatrix s = SymMatrix::symmetrized(Sg);
    out.group_pinv.push_back(pseudo_inverse(s, rank_tol).matrix());
    out.group_rank.push_back(numerical_rank(s, rank_tol));
    out.log_pdet += log_pdet(s, rank_tol);
    out.rank += out.group_rank.back();
  }
  return out;
}

Vector PenaltyModel::trace_pinv(const PenaltyInverse& inv) const {
  Vector t(static_cast<Index>(blocks_.size()));
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    t(static_cast<Index>(j)) = trace_product(inv.group_pinv[group_of_[j]], blocks_[j].S.matrix());
  }
  return t;
}

Vector PenaltyModel::trace_with(const Matrix& a) const {
  if (a.rows() != dim_ || a.cols() != dim_) throw InvalidInput("penalty: trace dimension mismatch");
  Vector t(static_cast<Index>(blocks_.size()));
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const auto& b = blocks_[j];
    t(static_cast<Index>(j)) =
        trace_product(Matrix(a.block(b.start, b.start, b.size(), b.size())), b.S.matrix());
  }
  return t;
}

}  // namespace mshmm
