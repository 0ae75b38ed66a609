#include "mshmm/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mshmm/errors.hpp"

namespace mshmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t find_name(const std::vector<std::string>& names, const std::string& name) {
  const auto it = std::find(names.begin(), names.end(), name);
  return static_cast<std::size_t>(it - names.begin());
}

int draw_categorical(const double* probs, int n, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    acc += probs[k];
    if (u < acc) return k;
  }
  // Rounding left a sliver of mass: return the last state with positive mass.
  for (int k = n - 1; k >= 0; --k) {
    if (probs[k] > 0) return k;
  }
  return n - 1;
}

void check_inputs(const Matrix& log_dens, const TpmSequence& tpm, const std::vector<Track>& tracks,
                  const std::vector<RowVector>& initial) {
  if (log_dens.rows() != tpm.size() || log_dens.cols() != tpm.states()) {
    throw InvalidInput("forward: density and transition dimensions disagree");
  }
  if (initial.size() != tracks.size()) {
    throw InvalidInput("forward: need one initial distribution per track");
  }
}

}  // namespace

Index ObservationTable::rows() const {
  if (!streams.empty()) return streams.front().size();
  if (!covariates.empty()) return covariates.front().size();
  return 0;
}

bool ObservationTable::missing(std::size_t s, Index t) const { return std::isnan(streams[s](t)); }

const Vector& ObservationTable::stream(const std::string& name) const {
  const auto k = find_name(stream_names, name);
  if (k == stream_names.size()) throw InvalidInput("unknown stream '" + name + "'");
  return streams[k];
}

const Vector& ObservationTable::covariate(const std::string& name) const {
  const auto k = find_name(covariate_names, name);
  if (k == covariate_names.size()) throw InvalidInput("unknown covariate '" + name + "'");
  return covariates[k];
}

bool ObservationTable::has_covariate(const std::string& name) const {
  return find_name(covariate_names, name) != covariate_names.size();
}

void ObservationTable::set_covariate(const std::string& name, Vector values) {
  const auto k = find_name(covariate_names, name);
  if (k == covariate_names.size()) {
    covariate_names.push_back(name);
    covariates.push_back(std::move(values));
  } else {
    covariates[k] = std::move(values);
  }
}

void ObservationTable::validate() const {
  const Index T = rows();
  if (stream_names.size() != streams.size() || covariate_names.size() != covariates.size()) {
    throw InvalidInput("observation table: names and columns disagree");
  }
  for (const auto& s : streams) {
    if (s.size() != T) throw InvalidInput("observation table: streams differ in length");
  }
  for (const auto& c : covariates) {
    if (c.size() != T) throw InvalidInput("observation table: covariates differ in length");
  }
  Index next = 0;
  for (const auto& tr : tracks) {
    if (tr.begin != next || tr.end <= tr.begin) {
      throw InvalidInput("observation table: tracks must partition the rows");
    }
    next = tr.end;
  }
  if (next != T) throw InvalidInput("observation table: tracks must partition the rows");
}

std::vector<Track> single_track(Index rows) { return {Track{"1", 0, rows}}; }

Matrix TpmSequence::at(Index t) const {
  Matrix g(N_, N_);
  for (int i = 0; i < N_; ++i) {
    for (int j = 0; j < N_; ++j) g(i, j) = (*this)(t, i, j);
  }
  return g;
}

void TpmSequence::set(Index t, const Matrix& gamma) {
  for (int i = 0; i < N_; ++i) {
    for (int j = 0; j < N_; ++j) (*this)(t, i, j) = gamma(i, j);
  }
}

TpmSequence tpm_from_predictors(const Matrix& eta, int N) {
  if (N < 1 || eta.cols() != N * (N - 1)) {
    throw InvalidInput("tpm_from_predictors: expected N*(N-1) predictor columns");
  }
  if (!eta.allFinite()) throw InvalidInput("tpm_from_predictors: non-finite predictor");
  TpmSequence out(eta.rows(), N);
  std::vector<double> row(N);
  for (Index t = 0; t < eta.rows(); ++t) {
    for (int i = 0; i < N; ++i) {
      double m = 0.0;  // diagonal reference has eta = 0
      for (int j = 0; j < N; ++j) {
        row[j] = j == i ? 0.0 : eta(t, offdiag_index(i, j, N));
        m = std::max(m, row[j]);
      }
      double s = 0.0;
      for (int j = 0; j < N; ++j) {
        row[j] = std::exp(row[j] - m);
        s += row[j];
      }
      for (int j = 0; j < N; ++j) out(t, i, j) = row[j] / s;
    }
  }
  return out;
}

Matrix tpm_from_row(const RowVector& eta, int N) {
  Matrix e = eta;
  return tpm_from_predictors(e, N).at(0);
}

RowVector stationary_distribution(const Matrix& gamma) {
  const Index N = gamma.rows();
  const Matrix M = Matrix::Identity(N, N) - gamma + Matrix::Ones(N, N);
  Eigen::FullPivLU<Matrix> lu(M.transpose());
  if (!lu.isInvertible()) {
    throw InvalidInput("stationary_distribution: chain is not irreducible");
  }
  RowVector d = lu.solve(Vector::Ones(N)).transpose();
  return d;
}

std::vector<RowVector> periodic_stationary(const std::vector<Matrix>& cycle) {
  const std::size_t L = cycle.size();
  if (L == 0) throw InvalidInput("periodic_stationary: empty cycle");
  // delta[0] is stationary for cycle[1] ... cycle[L-1] cycle[0].
  Matrix prod = Matrix::Identity(cycle[0].rows(), cycle[0].cols());
  for (std::size_t k = 1; k <= L; ++k) prod = prod * cycle[k % L];
  std::vector<RowVector> out(L);
  out[0] = stationary_distribution(prod);
  for (std::size_t k = 0; k + 1 < L; ++k) out[k + 1] = out[k] * cycle[k + 1];
  return out;
}

ForwardResult forward_loglik(const Matrix& log_dens, const TpmSequence& tpm,
                             const std::vector<Track>& tracks,
                             const std::vector<RowVector>& initial) {
  check_inputs(log_dens, tpm, tracks, initial);
  const int N = tpm.states();
  ForwardResult res;
  std::vector<double> phi(N), next(N);
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    const Track& tr = tracks[k];
    double ll = 0.0;
    for (Index t = tr.begin; t < tr.end; ++t) {
      const double m = log_dens.row(t).maxCoeff();
      if (m == kNegInf) {
        throw NumericalUnderflow(static_cast<std::size_t>(t),
                                 "forward: all state densities are zero at t = " +
                                     std::to_string(t + 1));
      }
      double c = 0.0;
      for (int j = 0; j < N; ++j) {
        double a;
        if (t == tr.begin) {
          a = initial[k](j);
        } else {
          a = 0.0;
          for (int i = 0; i < N; ++i) a += phi[i] * tpm(t, i, j);
        }
        next[j] = a * std::exp(log_dens(t, j) - m);
        c += next[j];
      }
      if (!(c > 0.0)) {
        throw NumericalUnderflow(static_cast<std::size_t>(t),
                                 "forward: forward vector vanished at t = " +
                                     std::to_string(t + 1));
      }
      for (int j = 0; j < N; ++j) phi[j] = next[j] / c;
      ll += std::log(c) + m;
    }
    res.track_loglik.push_back(ll);
  }
  // Fixed left-to-right reduction over tracks.
  for (double v : res.track_loglik) res.loglik += v;
  return res;
}

std::vector<int> viterbi(const Matrix& log_dens, const TpmSequence& tpm,
                         const std::vector<Track>& tracks, const std::vector<RowVector>& initial) {
  check_inputs(log_dens, tpm, tracks, initial);
  const int N = tpm.states();
  std::vector<int> states(static_cast<std::size_t>(log_dens.rows()));
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    const Track& tr = tracks[k];
    const Index n = tr.size();
    Matrix v(n, N);
    Eigen::MatrixXi back(n, N);
    for (int j = 0; j < N; ++j) v(0, j) = std::log(initial[k](j)) + log_dens(tr.begin, j);
    for (Index s = 1; s < n; ++s) {
      const Index t = tr.begin + s;
      for (int j = 0; j < N; ++j) {
        double best = kNegInf;
        int arg = 0;
        for (int i = 0; i < N; ++i) {
          const double cand = v(s - 1, i) + std::log(tpm(t, i, j));
          if (cand > best) {
            best = cand;
            arg = i;
          }
        }
        v(s, j) = best + log_dens(t, j);
        back(s, j) = arg;
      }
    }
    int cur = 0;
    for (int j = 1; j < N; ++j) {
      if (v(n - 1, j) > v(n - 1, cur)) cur = j;
    }
    if (v(n - 1, cur) == kNegInf) {
      throw NumericalUnderflow(static_cast<std::size_t>(tr.end - 1),
                               "viterbi: no path with positive probability");
    }
    for (Index s = n - 1; s >= 0; --s) {
      states[static_cast<std::size_t>(tr.begin + s)] = cur + 1;
      if (s > 0) cur = back(s, cur);
    }
  }
  return states;
}

std::vector<int> simulate_path(const TpmSequence& tpm, const std::vector<Track>& tracks,
                               const std::vector<RowVector>& initial,
                               const EmissionParams& emissions, std::mt19937_64& rng,
                               std::vector<Vector>& streams_out) {
  const int N = tpm.states();
  const Index T = tpm.size();
  if (initial.size() != tracks.size()) {
    throw InvalidInput("simulate: need one initial distribution per track");
  }
  std::vector<int> states(static_cast<std::size_t>(T));
  streams_out.assign(emissions.families.size(), Vector(T));
  std::vector<double> row(N);
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    const Track& tr = tracks[k];
    int s = draw_categorical(initial[k].data(), N, rng);
    for (Index t = tr.begin; t < tr.end; ++t) {
      if (t > tr.begin) {
        for (int j = 0; j < N; ++j) row[j] = tpm(t, s, j);
        s = draw_categorical(row.data(), N, rng);
      }
      states[static_cast<std::size_t>(t)] = s + 1;
      for (std::size_t m = 0; m < emissions.families.size(); ++m) {
        const Vector nat = emissions.natural[m].col(s);
        streams_out[m](t) = sample(emissions.families[m], {nat.data(), static_cast<std::size_t>(nat.size())}, rng);
      }
    }
  }
  return states;
}

}  // namespace mshmm
