#include "mshmm/predict.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "mshmm/errors.hpp"

namespace mshmm {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

double number(const std::string& s, const std::string& axis) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(trim(s), &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != trim(s).size() || !std::isfinite(v)) {
    throw InvalidInput("grid: bad number '" + trim(s) + "' for '" + axis + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(part);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::vector<GridAxis> parse_grid(const std::string& text) {
  std::vector<GridAxis> axes;
  for (const std::string& raw : split(text, ',')) {
    const std::string item = trim(raw);
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw InvalidInput("grid: expected name=values, found '" + item + "'");
    GridAxis a;
    a.name = trim(item.substr(0, eq));
    const std::string rhs = trim(item.substr(eq + 1));
    if (a.name.empty() || rhs.empty()) throw InvalidInput("grid: expected name=values, found '" + item + "'");
    for (const auto& ax : axes) {
      if (ax.name == a.name) throw InvalidInput("grid: duplicate axis '" + a.name + "'");
    }
    const auto range = split(rhs, ':');
    if (range.size() == 3) {
      const double lo = number(range[0], a.name), hi = number(range[1], a.name);
      const double n = number(range[2], a.name);
      if (n < 1 || n != std::floor(n)) throw InvalidInput("grid: point count of '" + a.name + "' must be a positive integer");
      const int count = static_cast<int>(n);
      for (int k = 0; k < count; ++k) a.values.push_back(count == 1 ? lo : lo + (hi - lo) * k / (count - 1));
    } else if (range.size() == 1) {
      for (const auto& v : split(rhs, ';')) a.values.push_back(number(v, a.name));
    } else {
      throw InvalidInput("grid: expected a:b:n for '" + a.name + "'");
    }
    axes.push_back(std::move(a));
  }
  if (axes.empty()) throw InvalidInput("grid: no axes");
  return axes;
}

ObservationTable grid_table(const std::vector<GridAxis>& axes) {
  Index rows = 1;
  for (const auto& a : axes) rows *= static_cast<Index>(a.values.size());
  ObservationTable t;
  Index inner = rows;
  for (const auto& a : axes) {
    const Index n = static_cast<Index>(a.values.size());
    inner /= n;
    Vector v(rows);
    for (Index r = 0; r < rows; ++r) v(r) = a.values[static_cast<std::size_t>((r / inner) % n)];
    t.set_covariate(a.name, v);
  }
  t.tracks = single_track(rows);
  return t;
}

Matrix stored_predictors(const StoredModel& m, const Vector& theta, const ObservationTable& newdata) {
  const int E = static_cast<int>(m.designs.size());
  Matrix eta(newdata.rows(), E);
  for (int e = 0; e < E; ++e) {
    const PredictorDesign& d = m.designs[static_cast<std::size_t>(e)];
    const Matrix X = d.evaluate(newdata);
    eta.col(e) = X * theta.segment(m.entry_offset[static_cast<std::size_t>(e)], X.cols());
  }
  return eta;
}

double quantile(std::vector<double> v, double prob) {
  if (v.empty()) throw InvalidInput("quantile: no values");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * prob;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

namespace {

struct PointPrediction {
  Matrix eta, gamma, delta;
};

PointPrediction evaluate(const StoredModel& m, const Vector& theta, const ObservationTable& grid,
                         const std::vector<GridAxis>& axes, int cycle_axis) {
  PointPrediction p;
  const int N = m.N;
  p.eta = stored_predictors(m, theta, grid);
  const Index rows = grid.rows();
  p.gamma.resize(rows, N * N);
  p.delta.resize(rows, N);
  std::vector<Matrix> g(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) {
    g[static_cast<std::size_t>(r)] = tpm_from_row(p.eta.row(r), N);
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) p.gamma(r, i * N + j) = g[static_cast<std::size_t>(r)](i, j);
    }
  }
  if (cycle_axis < 0) {
    for (Index r = 0; r < rows; ++r) p.delta.row(r) = stationary_distribution(g[static_cast<std::size_t>(r)]);
    return p;
  }
  // Rows sharing all other axis values form one cycle, in axis order.
  Index stride = 1;
  for (std::size_t a = static_cast<std::size_t>(cycle_axis) + 1; a < axes.size(); ++a) {
    stride *= static_cast<Index>(axes[a].values.size());
  }
  const Index L = static_cast<Index>(axes[static_cast<std::size_t>(cycle_axis)].values.size());
  for (Index r = 0; r < rows; ++r) {
    if ((r / stride) % L != 0) continue;
    std::vector<Matrix> cycle;
    for (Index k = 0; k < L; ++k) cycle.push_back(g[static_cast<std::size_t>(r + k * stride)]);
    const std::vector<RowVector> d = periodic_stationary(cycle);
    for (Index k = 0; k < L; ++k) p.delta.row(r + k * stride) = d[static_cast<std::size_t>(k)];
  }
  return p;
}

void cell_quantiles(const std::vector<Matrix>& draws, double lo_p, double hi_p, Matrix& lo, Matrix& hi) {
  const Matrix& first = draws.front();
  lo.resize(first.rows(), first.cols());
  hi.resize(first.rows(), first.cols());
  std::vector<double> cell(draws.size());
  for (Index r = 0; r < first.rows(); ++r) {
    for (Index c = 0; c < first.cols(); ++c) {
      for (std::size_t k = 0; k < draws.size(); ++k) cell[k] = draws[k](r, c);
      lo(r, c) = quantile(cell, lo_p);
      hi(r, c) = quantile(cell, hi_p);
    }
  }
}

}  // namespace

Prediction predict(const StoredModel& m, const std::vector<GridAxis>& axes, const PredictOptions& opt) {
  if (opt.draws < 0) throw InvalidInput("predict: draws must be non-negative");
  if (!(opt.level > 0 && opt.level < 1)) throw InvalidInput("predict: level must lie in (0, 1)");
  int cycle_axis = -1;
  if (!opt.cycle.empty()) {
    for (std::size_t a = 0; a < axes.size(); ++a) {
      if (axes[a].name == opt.cycle) cycle_axis = static_cast<int>(a);
    }
    if (cycle_axis < 0) throw InvalidInput("predict: cycle variable '" + opt.cycle + "' is not a grid axis");
  }
  const ObservationTable grid = grid_table(axes);
  PointPrediction point = evaluate(m, m.theta, grid, axes, cycle_axis);
  Prediction out;
  out.eta = point.eta;
  out.gamma = point.gamma;
  out.delta = point.delta;
  if (opt.draws == 0) return out;

  if (m.J.dim() != m.theta.size()) throw InvalidInput("predict: result has no Hessian for intervals");
  SymMatrix J = m.J;
  if (!is_positive_definite(J)) J = nearest_pd(J);
  const Eigen::LLT<Matrix> llt(J.matrix());
  std::vector<Matrix> eta_d, gamma_d, delta_d;
  const Index d = m.theta.size();
  for (int k = 0; k < opt.draws; ++k) {
    std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                      static_cast<std::uint32_t>(k)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> z(0.0, 1.0);
    Vector e(d);
    for (Index i = 0; i < d; ++i) e(i) = z(rng);
    // J = L L^T, so L^-T z has covariance J^-1.
    const Vector theta = m.theta + llt.matrixU().solve(e);
    PointPrediction p = evaluate(m, theta, grid, axes, cycle_axis);
    eta_d.push_back(std::move(p.eta));
    gamma_d.push_back(std::move(p.gamma));
    delta_d.push_back(std::move(p.delta));
  }
  const double lo_p = 0.5 * (1.0 - opt.level), hi_p = 1.0 - lo_p;
  cell_quantiles(eta_d, lo_p, hi_p, out.eta_lo, out.eta_hi);
  cell_quantiles(gamma_d, lo_p, hi_p, out.gamma_lo, out.gamma_hi);
  cell_quantiles(delta_d, lo_p, hi_p, out.delta_lo, out.delta_hi);
  return out;
}

CsvTable prediction_table(const StoredModel& m, const std::vector<GridAxis>& axes, const Prediction& p) {
  const ObservationTable grid = grid_table(axes);
  const bool intervals = p.eta_lo.size() > 0;
  CsvTable t;
  struct Column {
    const Matrix* value;
    const Matrix* lo;
    const Matrix* hi;
    Index col;
  };
  std::vector<Column> cols;
  for (const auto& a : axes) t.header.push_back(a.name);
  auto add = [&](const std::string& name, const Matrix& v, const Matrix& lo, const Matrix& hi, Index c) {
    t.header.push_back(name);
    if (intervals) {
      t.header.push_back(name + "_lo");
      t.header.push_back(name + "_hi");
    }
    cols.push_back({&v, &lo, &hi, c});
  };
  for (std::size_t e = 0; e < m.entry_names.size(); ++e) {
    add("eta." + m.entry_names[e], p.eta, p.eta_lo, p.eta_hi, static_cast<Index>(e));
  }
  for (int i = 0; i < m.N; ++i) {
    for (int j = 0; j < m.N; ++j) {
      add("gamma" + std::to_string(i + 1) + std::to_string(j + 1), p.gamma, p.gamma_lo, p.gamma_hi, i * m.N + j);
    }
  }
  for (int i = 0; i < m.N; ++i) add("delta" + std::to_string(i + 1), p.delta, p.delta_lo, p.delta_hi, i);
  for (Index r = 0; r < grid.rows(); ++r) {
    std::vector<std::string> row;
    for (const auto& c : grid.covariates) row.push_back(format_double(c(r)));
    for (const auto& c : cols) {
      row.push_back(format_double((*c.value)(r, c.col)));
      if (intervals) {
        row.push_back(format_double((*c.lo)(r, c.col)));
        row.push_back(format_double((*c.hi)(r, c.col)));
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace mshmm
