#pragma once

// Penalty blocks acting on index ranges of the coefficient vector, and the
// algebra of S_lambda = sum_j lambda_j S_j.

#include <string>
#include <vector>

#include "mshmm/linalg.hpp"

namespace mshmm {

struct PenaltyBlock {
  SymMatrix S;
  Index start = 0;
  std::string label;
  double default_lambda = 1e4;

  Index size() const { return S.dim(); }
  Index end() const { return start + S.dim(); }
};

/// Blocks whose index ranges coincide.
struct RangeGroup {
  Index start = 0;
  Index size = 0;
  std::vector<std::size_t> blocks;
};

/// Pseudo-inverse and log pseudo-determinant of S_lambda, computed per
/// range group so that each group's rank tolerance is relative to its own
/// largest eigenvalue.
struct PenaltyInverse {
  std::vector<Matrix> group_pinv;  // one per range group
  std::vector<Index> group_rank;
  double log_pdet = 0.0;
  Index rank = 0;
};

class PenaltyModel {
 public:
  PenaltyModel() = default;
  PenaltyModel(std::vector<PenaltyBlock> blocks, Index dim);

  Index dim() const { return dim_; }
  std::size_t size() const { return blocks_.size(); }
  const std::vector<PenaltyBlock>& blocks() const { return blocks_; }
  const PenaltyBlock& block(std::size_t j) const { return blocks_[j]; }
  const std::vector<RangeGroup>& range_groups() const { return groups_; }
  std::size_t group_of(std::size_t block) const { return group_of_[block]; }

  /// Default initial lambda per block.
  Vector default_lambda() const;

  /// Dense d x d S_lambda; lambda has one entry per block.
  SymMatrix assemble(const Vector& lambda) const;

  /// S_lambda theta.
  Vector apply(const Vector& lambda, const Vector& theta) const;

  /// theta^T S_j theta per block. Throws InvalidInput for q_j < -1e-10.
  Vector quadratic_forms(const Vector& theta) const;

  /// sum_j lambda_j q_j / 2.
  double value(const Vector& lambda, const Vector& theta) const;

  PenaltyInverse inverse(const Vector& lambda, double rank_tol = kDefaultRankTol) const;

  /// tr(S_lambda^- S_j) for every block.
  Vector trace_pinv(const PenaltyInverse& inv) const;

  /// tr(A S_j) for every block, using the block's sub-matrix of A.
  Vector trace_with(const Matrix& a) const;

 private:
  void check_lambda(const Vector& lambda) const;

  std::vector<PenaltyBlock> blocks_;
  Index dim_ = 0;
  std::vector<RangeGroup> groups_;
  std::vector<std::size_t> group_of_;
};

}  // namespace mshmm
