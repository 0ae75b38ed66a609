#pragma once

// Shared builders and independent reference implementations for the tests.

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mshmm/model.hpp"

namespace testing {

using mshmm::Index;
using mshmm::Matrix;
using mshmm::Vector;

inline mshmm::FormulaTerm smooth_term(mshmm::TermMode mode, std::vector<mshmm::MarginalSpec> ms,
                                      const std::string& by = "") {
  mshmm::FormulaTerm t;
  t.kind = mshmm::TermKind::smooth;
  t.smooth = mshmm::make_smooth(mode, std::move(ms), by);
  return t;
}

inline mshmm::MarginalSpec cyclic(const std::string& var, int k, double period) {
  mshmm::MarginalSpec m;
  m.kind = mshmm::BasisKind::cyclic_cubic;
  m.vars = {var};
  m.k = k;
  m.period = period;
  return m;
}

inline mshmm::MarginalSpec pspline(const std::string& var, int k) {
  mshmm::MarginalSpec m;
  m.kind = mshmm::BasisKind::bspline;
  m.vars = {var};
  m.k = k;
  return m;
}

inline mshmm::MarginalSpec ranef(const std::string& var) {
  mshmm::MarginalSpec m;
  m.kind = mshmm::BasisKind::random_effect;
  m.vars = {var};
  return m;
}

inline mshmm::Formula formula(std::vector<mshmm::FormulaTerm> terms) {
  mshmm::Formula f;
  f.terms = std::move(terms);
  return f;
}

inline mshmm::HmmSpec spec(int N, std::vector<mshmm::StreamSpec> streams,
                           const mshmm::Formula& f,
                           mshmm::DeltaMode delta = mshmm::DeltaMode::stationary) {
  mshmm::HmmSpec s;
  s.N = N;
  s.streams = std::move(streams);
  s.tpm_formulas.assign(static_cast<std::size_t>(N * (N - 1)), f);
  s.delta_mode = delta;
  return s;
}

/// Covariate-only table with NaN streams, split into equal contiguous tracks.
inline mshmm::ObservationTable frame(Index T, const std::vector<std::string>& streams, int tracks = 1) {
  mshmm::ObservationTable d;
  for (const auto& s : streams) {
    d.stream_names.push_back(s);
    d.streams.push_back(Vector::Constant(T, std::numeric_limits<double>::quiet_NaN()));
  }
  for (int k = 0; k < tracks; ++k) {
    d.tracks.push_back({std::to_string(k + 1), k * T / tracks, (k + 1) * T / tracks});
  }
  return d;
}

/// Hour of day cycling with the given step.
inline Vector cycle(Index T, double period, double step) {
  Vector v(T);
  for (Index t = 0; t < T; ++t) v(t) = std::fmod(static_cast<double>(t) * step, period);
  return v;
}

/// Simulates streams for the model built on `d` and returns the filled table.
inline mshmm::ObservationTable simulate_into(const mshmm::HmmSpec& s, mshmm::ObservationTable d,
                                             const std::function<Vector(const mshmm::HmmModel&)>& truth,
                                             std::uint64_t seed, std::vector<int>* states = nullptr) {
  mshmm::HmmModel m(s, d);
  std::vector<Vector> out;
  auto st = m.simulate(truth(m), seed, out);
  for (std::size_t k = 0; k < s.streams.size(); ++k) {
    for (std::size_t c = 0; c < d.stream_names.size(); ++c) {
      if (d.stream_names[c] == s.streams[k].name) d.streams[c] = out[k];
    }
  }
  if (states) *states = st;
  return d;
}

/// Exhaustive sum over all state paths of one track (independent of the
/// scaled recursion).
inline double path_sum_loglik(const Matrix& dens, const std::vector<Matrix>& gammas,
                              const Vector& delta) {
  const Index T = dens.rows();
  const int N = static_cast<int>(dens.cols());
  Index paths = 1;
  for (Index t = 0; t < T; ++t) paths *= N;
  double total = 0.0;
  std::vector<int> s(static_cast<std::size_t>(T));
  for (Index code = 0; code < paths; ++code) {
    Index c = code;
    for (Index t = 0; t < T; ++t) {
      s[static_cast<std::size_t>(t)] = static_cast<int>(c % N);
      c /= N;
    }
    double p = delta(s[0]) * dens(0, s[0]);
    for (Index t = 1; t < T; ++t) {
      p *= gammas[static_cast<std::size_t>(t)](s[t - 1], s[t]) * dens(t, s[t]);
    }
    total += p;
  }
  return std::log(total);
}

/// Brute-force most likely path; ties resolved to the lexicographically
/// smallest state sequence.
inline std::vector<int> path_argmax(const Matrix& dens, const std::vector<Matrix>& gammas,
                                    const Vector& delta) {
  const Index T = dens.rows();
  const int N = static_cast<int>(dens.cols());
  Index paths = 1;
  for (Index t = 0; t < T; ++t) paths *= N;
  double best = -1.0;
  std::vector<int> arg;
  std::vector<int> s(static_cast<std::size_t>(T));
  // Enumerate in lexicographic order (first time point most significant).
  for (Index code = 0; code < paths; ++code) {
    Index c = code;
    for (Index t = T - 1; t >= 0; --t) {
      s[static_cast<std::size_t>(t)] = static_cast<int>(c % N);
      c /= N;
    }
    double p = delta(s[0]) * dens(0, s[0]);
    for (Index t = 1; t < T; ++t) p *= gammas[static_cast<std::size_t>(t)](s[t - 1], s[t]) * dens(t, s[t]);
    if (p > best * (1 + 1e-12)) {
      best = p;
      arg = s;
    }
  }
  for (int& v : arg) v += 1;
  return arg;
}

/// Stationary vector by power iteration.
inline Vector power_stationary(const Matrix& g, int iters = 100000) {
  Vector d = Vector::Constant(g.rows(), 1.0 / static_cast<double>(g.rows()));
  for (int k = 0; k < iters; ++k) {
    Vector n = (d.transpose() * g).transpose();
    n /= n.sum();
    if ((n - d).cwiseAbs().maxCoeff() < 1e-16) return n;
    d = n;
  }
  return d;
}

/// Central-difference gradient.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double rel = 1e-5) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double h = rel * (1.0 + std::abs(x(i)));
    Vector a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (a(i) - b(i));
  }
  return g;
}

/// Fourth-order central-difference gradient (five-point stencil).
inline Vector fd_gradient5(const std::function<double(const Vector&)>& f, const Vector& x, double rel = 1e-3) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double h = rel * (1.0 + std::abs(x(i)));
    auto at = [&](double s) {
      Vector y = x;
      y(i) += s * h;
      return f(y);
    };
    g(i) = (at(-2) - 8 * at(-1) + 8 * at(1) - at(2)) / (12 * h);
  }
  return g;
}

inline Matrix random_matrix(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < c; ++j) m(i, j) = n(rng);
  }
  return m;
}

inline Vector random_vector(Index n, std::mt19937_64& rng) { return random_matrix(n, 1, rng).col(0); }

inline Matrix random_stochastic(int N, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix g(N, N);
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) g(i, j) = u(rng);
    g.row(i) /= g.row(i).sum();
  }
  return g;
}

inline double max_rel_error(const Vector& a, const Vector& b) {
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a(i) - b(i)) / std::max(1.0, std::abs(b(i))));
  }
  return worst;
}

}  // namespace testing
