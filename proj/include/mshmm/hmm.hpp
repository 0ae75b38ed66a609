#pragma once

// Hidden Markov model primitives: transition-matrix link, scaled forward
// recursion, stationary distributions, decoding and simulation.
//
// Time-varying transition matrices follow the product form
//   L = delta P(x_1) Gamma(2) P(x_2) ... Gamma(T) P(x_T) 1,
// so within each track Gamma(t) describes the move from t-1 to t and the
// matrix at the first row of a track is never used by the recursion.

#include <random>
#include <string>
#include <vector>

#include "mshmm/distributions.hpp"
#include "mshmm/linalg.hpp"

namespace mshmm {

/// Contiguous block of rows [begin, end) belonging to one individual/series.
struct Track {
  std::string id;
  Index begin = 0;
  Index end = 0;
  Index size() const { return end - begin; }
};

/// Observed streams (NaN marks a missing entry), covariates and tracks.
struct ObservationTable {
  std::vector<std::string> stream_names;
  std::vector<Vector> streams;
  std::vector<std::string> covariate_names;
  std::vector<Vector> covariates;
  std::vector<Track> tracks;

  Index rows() const;
  bool missing(std::size_t stream, Index t) const;
  const Vector& stream(const std::string& name) const;
  const Vector& covariate(const std::string& name) const;
  bool has_covariate(const std::string& name) const;
  void set_covariate(const std::string& name, Vector values);
  /// Checks equal lengths and that tracks partition the rows.
  void validate() const;
};

/// One track covering all rows.
std::vector<Track> single_track(Index rows);

/// T transition matrices stored row-major, one row of N*N entries per time.
class TpmSequence {
 public:
  TpmSequence() = default;
  TpmSequence(Index T, int N) : N_(N), data_(Matrix::Zero(T, N * N)) {}

  int states() const { return N_; }
  Index size() const { return data_.rows(); }
  double operator()(Index t, int i, int j) const { return data_(t, i * N_ + j); }
  double& operator()(Index t, int i, int j) { return data_(t, i * N_ + j); }
  Matrix at(Index t) const;
  void set(Index t, const Matrix& gamma);

 private:
  int N_ = 0;
  Matrix data_;
};

/// Index of off-diagonal entry (i, j) in row-major order skipping the
/// diagonal.
inline int offdiag_index(int i, int j, int N) { return i * (N - 1) + (j < i ? j : j - 1); }

/// Inverse multinomial-logit link. eta is T x (N^2 - N) in offdiag order;
/// the diagonal is the reference category.
TpmSequence tpm_from_predictors(const Matrix& eta, int N);
Matrix tpm_from_row(const RowVector& eta, int N);

/// Stationary distribution of a single irreducible stochastic matrix.
RowVector stationary_distribution(const Matrix& gamma);

/// Periodically stationary distributions for the cycle
/// Gamma(1), ..., Gamma(L): delta(t) is stationary for the rotated product
/// Gamma(t+1) ... Gamma(L) Gamma(1) ... Gamma(t), so that
/// delta(t) Gamma(t+1) = delta(t+1) with indices taken mod L.
std::vector<RowVector> periodic_stationary(const std::vector<Matrix>& cycle);

/// Result of the scaled forward recursion.
struct ForwardResult {
  double loglik = 0.0;
  std::vector<double> track_loglik;
};

/// Sum over tracks of log-likelihoods. log_dens is T x N (missing entries
/// contribute 0); initial holds one distribution per track.
ForwardResult forward_loglik(const Matrix& log_dens, const TpmSequence& tpm,
                             const std::vector<Track>& tracks,
                             const std::vector<RowVector>& initial);

/// Most likely state sequence (1-based labels). Ties go to the lower state.
std::vector<int> viterbi(const Matrix& log_dens, const TpmSequence& tpm,
                         const std::vector<Track>& tracks, const std::vector<RowVector>& initial);

/// Emission parameters on the natural scale: natural[s](p, i) for stream s,
/// parameter p, state i.
struct EmissionParams {
  std::vector<Family> families;
  std::vector<Matrix> natural;
};

/// Draws a state path and observations. Returns 1-based states.
std::vector<int> simulate_path(const TpmSequence& tpm, const std::vector<Track>& tracks,
                               const std::vector<RowVector>& initial,
                               const EmissionParams& emissions, std::mt19937_64& rng,
                               std::vector<Vector>& streams_out);

}  // namespace mshmm
