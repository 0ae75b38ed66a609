#include "mshmm/simulate.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "mshmm/errors.hpp"
#include "mshmm/predict.hpp"

namespace mshmm {

ObservationTable simulation_frame(const ModelConfig& c, Index T, std::uint64_t seed) {
  if (T <= 0) throw InvalidInput("simulate: T must be positive (empty data)");
  ObservationTable d;
  for (const auto& s : c.spec.streams) {
    d.stream_names.push_back(s.name);
    d.streams.push_back(Vector::Constant(T, std::numeric_limits<double>::quiet_NaN()));
  }
  for (const auto& name : c.covariate_names()) {
    bool found = false;
    for (const auto& [n, g] : c.covariates) found = found || n == name;
    if (!found) throw InvalidInput("simulate: no generator for covariate '" + name + "'");
  }
  auto blocks = [&](const CovariateGenerator& g) {
    const Index n = static_cast<Index>(g.a);
    if (n > T) throw InvalidInput("simulate: more groups than rows");
    return (T + n - 1) / n;
  };
  d.tracks = single_track(T);
  d.tracks[0].id = "1";
  for (const auto& [name, g] : c.covariates) {
    if (name == c.track_column && g.kind == CovariateGenerator::Kind::group) {
      const Index size = blocks(g);
      d.tracks.clear();
      for (Index b = 0, k = 1; b < T; b += size, ++k) d.tracks.push_back({std::to_string(k), b, std::min(T, b + size)});
    }
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 1u};
  std::mt19937_64 rng(seq);
  for (const auto& [name, g] : c.covariates) {
    Vector v(T);
    switch (g.kind) {
      case CovariateGenerator::Kind::cycle:
        for (const auto& tr : d.tracks) {
          for (Index t = tr.begin; t < tr.end; ++t) {
            v(t) = std::fmod(static_cast<double>(t - tr.begin) * g.b, g.a);
          }
        }
        break;
      case CovariateGenerator::Kind::uniform: {
        std::uniform_real_distribution<double> u(g.a, g.b);
        for (Index t = 0; t < T; ++t) v(t) = u(rng);
        break;
      }
      case CovariateGenerator::Kind::group: {
        const Index size = blocks(g);
        for (Index t = 0; t < T; ++t) v(t) = static_cast<double>(t / size + 1);
        break;
      }
    }
    d.set_covariate(name, v);
  }
  d.validate();
  return d;
}

SimulatedData simulate_from_config(const ModelConfig& c, Index T, std::uint64_t seed, ThetaSource source) {
  SimulatedData out;
  ObservationTable frame = simulation_frame(c, T, seed);
  const HmmModel m(c.spec, frame);
  out.theta = initial_theta(c, m);
  if (source == ThetaSource::random) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 2u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> intercept(-3.0, -1.0);
    std::normal_distribution<double> coef(0.0, 0.5);
    for (int e = 0; e < m.entries(); ++e) {
      const Index off = m.entry_offset(e);
      out.theta(off) = intercept(rng);
      for (Index k = 1; k < m.design(e).cols(); ++k) out.theta(off + k) = coef(rng);
    }
  }
  std::vector<Vector> streams;
  out.states = m.simulate(out.theta, seed, streams);
  out.table = std::move(frame);
  out.table.streams = std::move(streams);
  return out;
}

SimulatedData simulate_from_result(const LoadedResult& r, Index T, std::uint64_t seed) {
  SimulatedData out;
  ObservationTable frame = simulation_frame(r.config, T, seed);
  const HmmModel m(r.config.spec, frame);
  if (m.dim() != r.stored.theta.size()) {
    throw InvalidInput("simulate: stored estimates do not match the model built from the result's config");
  }
  out.theta = r.stored.theta;
  const TpmSequence g = tpm_from_predictors(stored_predictors(r.stored, out.theta, frame), m.states());
  std::mt19937_64 rng(seed);
  std::vector<Vector> streams;
  out.states = simulate_path(g, frame.tracks, m.initial(out.theta, g), m.emissions(out.theta), rng, streams);
  out.table = std::move(frame);
  out.table.streams = std::move(streams);
  return out;
}

}  // namespace mshmm
