#pragma once

// Synthetic datasets from a configuration: covariates from the config's
// generators, parameters from init entries, random draws or a stored fit.

#include <cstdint>
#include <vector>

#include "mshmm/config.hpp"
#include "mshmm/io.hpp"

namespace mshmm {

/// T rows of covariates from the config's generators; streams present but
/// missing. A group() covariate named as the track column defines the
/// tracks, otherwise there is one track. cycle() restarts in every track.
ObservationTable simulation_frame(const ModelConfig& c, Index T, std::uint64_t seed);

enum class ThetaSource { init, random };

struct SimulatedData {
  ObservationTable table;
  std::vector<int> states;  // 1-based
  Vector theta;
};

/// init: defaults overridden by init entries. random: as init, then
/// transition intercepts from U(-3, -1) and smooth coefficients from N(0, 0.5^2).
SimulatedData simulate_from_config(const ModelConfig& c, Index T, std::uint64_t seed,
                                   ThetaSource source = ThetaSource::init);

/// Uses the stored bases and estimates on covariates from the result's config.
SimulatedData simulate_from_result(const LoadedResult& r, Index T, std::uint64_t seed);

}  // namespace mshmm
