#pragma once

// Plot-ready predictions from a stored fit: linear predictors, transition
// probabilities and stationary state probabilities on a covariate grid, with
// pointwise intervals from draws of the approximate posterior N(theta, J^-1).

#include <cstdint>
#include <string>
#include <vector>

#include "mshmm/io.hpp"

namespace mshmm {

struct GridAxis {
  std::string name;
  std::vector<double> values;
};

/// "tday=0:24:49, doy=180, ID=1;2;3": a:b:n is n equally spaced points from a
/// to b inclusive, ';' separates listed values.
std::vector<GridAxis> parse_grid(const std::string& text);

/// Cartesian product with the first axis varying slowest.
ObservationTable grid_table(const std::vector<GridAxis>& axes);

struct PredictOptions {
  int draws = 1000;  // 0: point predictions only
  std::uint64_t seed = 1;
  /// Axis whose values form one period; delta columns are then the periodic
  /// stationary distribution, else the stationary distribution of each matrix.
  std::string cycle;
  double level = 0.95;
};

struct Prediction {
  Matrix eta;                  // rows x entries
  Matrix gamma;                // rows x N*N, row-major per matrix
  Matrix delta;                // rows x N
  Matrix eta_lo, eta_hi;       // empty when draws == 0
  Matrix gamma_lo, gamma_hi;
  Matrix delta_lo, delta_hi;
};

/// Linear predictors of each entry on newdata.
Matrix stored_predictors(const StoredModel& m, const Vector& theta, const ObservationTable& newdata);

Prediction predict(const StoredModel& m, const std::vector<GridAxis>& axes, const PredictOptions& opt);

/// Grid columns followed by eta.*, gammaIJ and deltaI, each with _lo and _hi
/// columns when intervals were computed.
CsvTable prediction_table(const StoredModel& m, const std::vector<GridAxis>& axes, const Prediction& p);

/// Sample quantile, linear interpolation between order statistics.
double quantile(std::vector<double> v, double prob);

}  // namespace mshmm
