#pragma once

// Markov-switching model with smooth covariate effects on the transition
// probabilities: coefficient layout, likelihood, exact gradient, decoding and
// simulation.

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mshmm/distributions.hpp"
#include "mshmm/gradient.hpp"
#include "mshmm/hmm.hpp"
#include "mshmm/penalty.hpp"
#include "mshmm/terms.hpp"

namespace mshmm {

struct StreamSpec {
  std::string name;
  Family family = Family::normal;
};

enum class DeltaMode { stationary, estimated, uniform };

std::string to_string(DeltaMode m);
DeltaMode delta_mode_from_string(const std::string& name);

struct HmmSpec {
  int N = 2;
  std::vector<StreamSpec> streams;
  /// One formula per off-diagonal entry in offdiag_index order.
  std::vector<Formula> tpm_formulas;
  DeltaMode delta_mode = DeltaMode::stationary;

  void validate() const;
};

struct LayoutBlock {
  std::string name;
  Index start = 0;
  Index length = 0;
  Link link = Link::identity;
  bool penalized = false;
};

struct CoefficientLayout {
  std::vector<LayoutBlock> blocks;
  Index total_dim = 0;

  const LayoutBlock& find(const std::string& name) const;
  void validate() const;
};

class HmmModel final : public LikelihoodModel {
 public:
  HmmModel(HmmSpec spec, ObservationTable data);

  const HmmSpec& spec() const { return spec_; }
  const ObservationTable& data() const { return data_; }
  const CoefficientLayout& layout() const { return layout_; }
  int states() const { return spec_.N; }
  int entries() const { return spec_.N * (spec_.N - 1); }

  /// Design of transition entry e (shared between entries whose formulas
  /// print identically).
  const PredictorDesign& design(int e) const { return *designs_[static_cast<std::size_t>(e)]; }
  Index entry_offset(int e) const { return entry_offset_[static_cast<std::size_t>(e)]; }
  /// theta index of working parameter p of stream s in state i.
  Index emission_index(std::size_t s, int p, int i) const;
  /// First index of the N - 1 initial-distribution parameters (estimated mode).
  Index delta_offset() const { return delta_offset_; }

  /// "gamma12" style name of off-diagonal entry e.
  std::string entry_name(int e) const;

  /// Penalty blocks of every smooth in every transition entry.
  PenaltyModel penalties() const;

  /// Data-driven starting values: emission parameters from state-wise
  /// quantiles, transition intercepts -2, smooth coefficients 0.
  Vector default_theta() const;

  Index dim() const override { return layout_.total_dim; }
  Index n_obs() const override { return data_.rows(); }
  double loglik(const Vector& theta) const override;
  /// Analytic reverse sweep through the scaled forward recursion.
  double loglik_gradient(const Vector& theta, Vector& grad) const override;

  /// Log-space forward recursion recorded on a tape. Slow; independent check
  /// of loglik_gradient.
  double loglik_tape(const Vector& theta, Vector* grad) const;

  /// T x N(N-1) linear predictors.
  Matrix predictors(const Vector& theta) const;
  /// Linear predictors on new covariate values.
  Matrix predictors(const Vector& theta, const ObservationTable& newdata) const;
  TpmSequence tpm(const Vector& theta) const;
  /// T x N log state densities (missing observations contribute 0).
  Matrix log_densities(const Vector& theta) const;
  EmissionParams emissions(const Vector& theta) const;
  /// One initial distribution per track.
  std::vector<RowVector> initial(const Vector& theta, const TpmSequence& tpm) const;

  std::vector<int> viterbi(const Vector& theta) const;

  /// Draws states and observations at the model's covariates and tracks.
  /// Returns 1-based states; streams are written to out.
  std::vector<int> simulate(const Vector& theta, std::uint64_t seed,
                            std::vector<Vector>& out) const;

 private:
  void check_theta(const Vector& theta) const;

  HmmSpec spec_;
  ObservationTable data_;
  CoefficientLayout layout_;
  std::vector<std::shared_ptr<const PredictorDesign>> designs_;
  std::vector<Index> entry_offset_;
  std::vector<Index> emission_offset_;
  Index delta_offset_ = -1;
  std::vector<std::size_t> stream_column_;
};

}  // namespace mshmm
