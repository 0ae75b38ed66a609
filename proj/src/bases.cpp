#include "mshmm/bases.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "mshmm/errors.hpp"

namespace mshmm {

std::string to_string(BasisKind kind) {
  switch (kind) {
    case BasisKind::bspline:
      return "ps";
    case BasisKind::cyclic_cubic:
      return "cc";
    case BasisKind::random_effect:
      return "re";
    case BasisKind::radial_2d:
      return "tp";
  }
  return "?";
}

BasisKind basis_kind_from_string(const std::string& name) {
  if (name == "ps" || name == "bs" || name == "bspline") return BasisKind::bspline;
  if (name == "cc" || name == "cyclic") return BasisKind::cyclic_cubic;
  if (name == "re" || name == "random_effect") return BasisKind::random_effect;
  if (name == "tp" || name == "radial_2d") return BasisKind::radial_2d;
  throw InvalidInput("unknown basis kind '" + name + "'");
}

namespace {

void require_finite(const Vector& z, const char* what) {
  if (!z.allFinite()) throw InvalidInput(std::string(what) + ": non-finite covariate");
}

// Type-7 sample quantiles of sorted values.
double quantile_sorted(const std::vector<double>& v, double p) {
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

bool strictly_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] > v[i - 1])) return false;
  }
  return true;
}

// Quantile knots at probabilities probs; falls back to quantiles of the
// unique values when ties make the knots coincide.
std::vector<double> quantile_knots(const Vector& z, const std::vector<double>& probs) {
  std::vector<double> sorted(z.data(), z.data() + z.size());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> knots;
  for (double p : probs) knots.push_back(quantile_sorted(sorted, p));
  if (strictly_increasing(knots)) return knots;
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  knots.clear();
  if (sorted.size() >= 2) {
    for (double p : probs) knots.push_back(quantile_sorted(sorted, p));
  }
  if (knots.size() != probs.size() || !strictly_increasing(knots)) {
    throw InvalidInput("too few distinct covariate values for the requested basis dimension");
  }
  return knots;
}

// Nonzero B-spline values of the given degree at x, for x in
// [t[span], t[span + 1]]. Returns degree + 1 values for basis functions
// span - degree .. span.
void bspline_nonzero(const Vector& t, int degree, Index span, double x, double* out) {
  std::vector<double> left(degree + 1), right(degree + 1);
  out[0] = 1.0;
  for (int r = 1; r <= degree; ++r) {
    left[r] = x - t(span + 1 - r);
    right[r] = t(span + r) - x;
    double saved = 0.0;
    for (int s = 0; s < r; ++s) {
      const double temp = out[s] / (right[s + 1] + left[r - s]);
      out[s] = saved + right[s + 1] * temp;
      saved = left[r - s] * temp;
    }
    out[r] = saved;
  }
}

// Full row of K basis values (and optionally first derivatives) at x, which
// must lie in [t[degree], t[K]].
void bspline_row(const Vector& t, int degree, int K, double x, double* row, double* drow) {
  Index span = degree;
  while (span < K - 1 && x >= t(span + 1)) ++span;
  std::vector<double> vals(degree + 1);
  bspline_nonzero(t, degree, span, x, vals.data());
  for (int s = 0; s <= degree; ++s) row[span - degree + s] = vals[s];
  if (drow == nullptr) return;
  // Derivative from the degree - 1 basis on the same knots.
  std::vector<double> lower(degree);
  if (degree >= 1) bspline_nonzero(t, degree - 1, span, x, lower.data());
  // lower[s] is N_{span-degree+1+s, degree-1}.
  for (int s = 0; s <= degree; ++s) {
    const Index i = span - degree + s;
    double d = 0.0;
    // N_{i,degree-1} term (index s-1 in lower)
    if (s >= 1) d += lower[s - 1] / (t(i + degree) - t(i));
    // N_{i+1,degree-1} term (index s in lower)
    if (s < degree) d -= lower[s] / (t(i + degree + 1) - t(i + 1));
    drow[i] = degree * d;
  }
}

struct CyclicMatrices {
  Matrix F;  // knot second derivatives = F * beta
  Matrix S;  // penalty
  Vector h;  // interval widths (h[K-1] wraps)
};

CyclicMatrices cyclic_matrices(const Vector& knots, double period) {
  const Index K = knots.size();
  Vector h(K);
  for (Index i = 0; i + 1 < K; ++i) h(i) = knots(i + 1) - knots(i);
  h(K - 1) = knots(0) + period - knots(K - 1);
  Matrix B = Matrix::Zero(K, K), D = Matrix::Zero(K, K);
  for (Index i = 0; i < K; ++i) {
    const Index im = (i + K - 1) % K;
    const Index ip = (i + 1) % K;
    const double hm = h(im), hi = h(i);
    D(i, im) += 1.0 / hm;
    D(i, i) += -1.0 / hm - 1.0 / hi;
    D(i, ip) += 1.0 / hi;
    B(i, im) += hm / 6.0;
    B(i, i) += (hm + hi) / 3.0;
    B(i, ip) += hi / 6.0;
  }
  Eigen::LDLT<Matrix> ldlt(B);
  CyclicMatrices out;
  out.F = ldlt.solve(D);
  Matrix S = D.transpose() * out.F;
  out.S = 0.5 * (S + S.transpose());
  out.h = h;
  return out;
}

Matrix difference_matrix(int K, int order) {
  Matrix D = Matrix::Identity(K, K);
  for (int o = 0; o < order; ++o) {
    Matrix next(D.rows() - 1, K);
    for (Index r = 0; r + 1 < D.rows(); ++r) next.row(r) = D.row(r + 1) - D.row(r);
    D = next;
  }
  return D;
}

Matrix radial_matrix(const Matrix& points, const Matrix& knots) {
  Matrix E(points.rows(), knots.rows());
  for (Index i = 0; i < points.rows(); ++i) {
    for (Index k = 0; k < knots.rows(); ++k) {
      E(i, k) = thin_plate_eta((points.row(i) - knots.row(k)).norm());
    }
  }
  return E;
}

DesignBlock make_simple_block(const MarginalBasis& basis, const Matrix& input,
                              const std::string& label) {
  DesignBlock d;
  d.recipe.marginals = {basis};
  d.recipe.marginal_centering = {Centering{}};
  d.X = basis.evaluate(input);
  d.penalties.push_back({basis.penalty(), label});
  return d;
}

}  // namespace

double thin_plate_eta(double r) {
  if (r <= 0.0) return 0.0;
  return r * r * std::log(r) / (8.0 * std::numbers::pi);
}

Matrix MarginalBasis::evaluate(const Matrix& z) const {
  if (z.cols() != input_dim()) throw InvalidInput("basis evaluation: wrong input width");
  if (!z.allFinite()) throw InvalidInput("basis evaluation: non-finite covariate");
  const Index n = z.rows();
  switch (kind) {
    case BasisKind::bspline: {
      Matrix X = Matrix::Zero(n, K);
      std::vector<double> row(K), drow(K);
      for (Index t = 0; t < n; ++t) {
        const double x = z(t, 0);
        const double xc = std::clamp(x, lower, upper);
        std::fill(row.begin(), row.end(), 0.0);
        std::fill(drow.begin(), drow.end(), 0.0);
        const bool outside = x != xc;
        bspline_row(knots, degree, K, xc, row.data(), outside ? drow.data() : nullptr);
        for (int k = 0; k < K; ++k) X(t, k) = row[k] + (outside ? (x - xc) * drow[k] : 0.0);
      }
      return X;
    }
    case BasisKind::cyclic_cubic: {
      const double p = *period;
      const auto cm = cyclic_matrices(knots, p);
      Matrix X = Matrix::Zero(n, K);
      for (Index t = 0; t < n; ++t) {
        double x = std::fmod(z(t, 0), p);
        if (x < 0) x += p;
        if (x < knots(0)) x += p;
        Index j = K - 1;
        for (Index i = 0; i + 1 < K; ++i) {
          if (x < knots(i + 1)) {
            j = i;
            break;
          }
        }
        const Index jp = (j + 1) % K;
        const double h = cm.h(j);
        const double right = (j + 1 < K ? knots(j + 1) : knots(0) + p) - x;
        const double left = x - knots(j);
        const double am = right / h, ap = left / h;
        const double cmn = (right * right * right / h - h * right) / 6.0;
        const double cpl = (left * left * left / h - h * left) / 6.0;
        X(t, j) += am;
        X(t, jp) += ap;
        X.row(t) += cmn * cm.F.row(j) + cpl * cm.F.row(jp);
      }
      return X;
    }
    case BasisKind::random_effect: {
      Matrix X = Matrix::Zero(n, K);
      for (Index t = 0; t < n; ++t) {
        const double g = z(t, 0);
        const auto k = static_cast<long>(std::llround(g));
        if (std::abs(g - static_cast<double>(k)) > 1e-9 || k < 1 || k > K) {
          throw InvalidInput("random effect: group label " + std::to_string(g) +
                             " outside 1.." + std::to_string(K));
        }
        X(t, k - 1) = 1.0;
      }
      return X;
    }
    case BasisKind::radial_2d: {
      Matrix X(n, K);
      X.leftCols(K - 3) = radial_matrix(z, knots_2d) * constraint_basis;
      X.col(K - 3).setOnes();
      X.col(K - 2) = z.col(0);
      X.col(K - 1) = z.col(1);
      return X;
    }
  }
  return {};
}

Matrix MarginalBasis::penalty() const {
  switch (kind) {
    case BasisKind::bspline: {
      const Matrix D = difference_matrix(K, penalty_order);
      return D.transpose() * D;
    }
    case BasisKind::cyclic_cubic:
      return cyclic_matrices(knots, *period).S;
    case BasisKind::random_effect:
      return Matrix::Identity(K, K);
    case BasisKind::radial_2d: {
      Matrix S = Matrix::Zero(K, K);
      const Matrix E = radial_matrix(knots_2d, knots_2d);
      Matrix P = constraint_basis.transpose() * E * constraint_basis;
      S.topLeftCorner(K - 3, K - 3) = 0.5 * (P + P.transpose());
      return S;
    }
  }
  return {};
}

Matrix Centering::apply(const Matrix& x) const {
  if (!active) return x;
  Matrix c = x.rowwise() - means.transpose();
  Matrix out(c.rows(), c.cols() - 1);
  out.leftCols(dropped) = c.leftCols(dropped);
  out.rightCols(c.cols() - dropped - 1) = c.rightCols(c.cols() - dropped - 1);
  return out;
}

Matrix Centering::transform_penalty(const Matrix& s) const {
  if (!active) return s;
  const Index n = s.rows();
  Matrix out(n - 1, n - 1);
  for (Index i = 0, oi = 0; i < n; ++i) {
    if (i == dropped) continue;
    for (Index j = 0, oj = 0; j < n; ++j) {
      if (j == dropped) continue;
      out(oi, oj++) = s(i, j);
    }
    ++oi;
  }
  return out;
}

Vector Centering::expand(const Vector& beta) const {
  if (!active) return beta;
  Vector out(beta.size() + 1);
  out.head(dropped) = beta.head(dropped);
  out(dropped) = 0.0;
  out.tail(beta.size() - dropped) = beta.tail(beta.size() - dropped);
  return out;
}

Matrix BlockRecipe::evaluate(const std::vector<Matrix>& inputs) const {
  if (inputs.size() != marginals.size()) {
    throw InvalidInput("design evaluation: wrong number of marginal inputs");
  }
  std::vector<Matrix> parts;
  for (std::size_t m = 0; m < marginals.size(); ++m) {
    parts.push_back(marginal_centering[m].apply(marginals[m].evaluate(inputs[m])));
  }
  Matrix X = tensor ? row_kron(parts[0], parts[1]) : parts[0];
  return block_centering.apply(X);
}

DesignBlock build_bspline(const Vector& z, int K, int degree, int penalty_order) {
  if (degree < 0 || K < 3 || K < degree + 2) {
    throw InvalidInput("bspline: K must be at least degree + 2 and at least 3");
  }
  if (penalty_order < 0 || penalty_order >= K) {
    throw InvalidInput("bspline: penalty order must be below K");
  }
  if (z.size() == 0) throw InvalidInput("bspline: empty covariate");
  require_finite(z, "bspline");
  const int m = K - degree + 1;  // breakpoints including the ends
  std::vector<double> probs;
  for (int i = 0; i < m; ++i) probs.push_back(static_cast<double>(i) / (m - 1));
  const auto br = quantile_knots(z, probs);
  MarginalBasis b;
  b.kind = BasisKind::bspline;
  b.K = K;
  b.degree = degree;
  b.penalty_order = penalty_order;
  b.lower = br.front();
  b.upper = br.back();
  b.knots.resize(K + degree + 1);
  const double h0 = br[1] - br[0];
  const double h1 = br[m - 1] - br[m - 2];
  for (int i = 0; i < degree; ++i) b.knots(i) = br[0] - (degree - i) * h0;
  for (int i = 0; i < m; ++i) b.knots(degree + i) = br[i];
  for (int i = 0; i < degree; ++i) b.knots(degree + m + i) = br[m - 1] + (i + 1) * h1;
  return make_simple_block(b, z, "ps");
}

DesignBlock build_cyclic(const Vector& z, int K, double period) {
  if (K < 3) throw InvalidInput("cyclic: K must be at least 3");
  if (!(period > 0.0)) throw InvalidInput("cyclic: period must be positive");
  if (z.size() == 0) throw InvalidInput("cyclic: empty covariate");
  require_finite(z, "cyclic");
  if (z.minCoeff() < 0.0 || z.maxCoeff() >= period) {
    throw InvalidInput("cyclic: covariate outside [0, period)");
  }
  std::vector<double> probs;
  for (int k = 0; k < K; ++k) probs.push_back(static_cast<double>(k) / K);
  // Quantiles up to (K-1)/K of the data; the last knot must stay inside the
  // period so the wrap interval is non-empty.
  const auto kn = quantile_knots(z, probs);
  if (!(kn.back() < kn.front() + period)) throw InvalidInput("cyclic: degenerate knots");
  MarginalBasis b;
  b.kind = BasisKind::cyclic_cubic;
  b.K = K;
  b.period = period;
  b.knots = Eigen::Map<const Vector>(kn.data(), K);
  return make_simple_block(b, z, "cc");
}

DesignBlock build_random_effect(const Vector& group, int K_groups) {
  if (K_groups < 1) throw InvalidInput("random effect: need at least one group");
  MarginalBasis b;
  b.kind = BasisKind::random_effect;
  b.K = K_groups;
  b.penalty_order = 0;
  return make_simple_block(b, group, "re");
}

DesignBlock build_radial_2d(const Matrix& xy, int K) {
  if (xy.cols() != 2) throw InvalidInput("radial_2d: expected two coordinate columns");
  if (K < 4) throw InvalidInput("radial_2d: K must be at least 4");
  if (!xy.allFinite()) throw InvalidInput("radial_2d: non-finite coordinates");
  // Distinct locations in first-appearance order.
  std::set<std::pair<double, double>> seen;
  std::vector<Index> distinct;
  for (Index i = 0; i < xy.rows(); ++i) {
    if (seen.insert({xy(i, 0), xy(i, 1)}).second) distinct.push_back(i);
  }
  const Index n_knots = K;
  if (static_cast<Index>(distinct.size()) < n_knots) {
    throw InvalidInput("radial_2d: K exceeds the number of distinct locations");
  }
  // Farthest-point subsample starting from the point farthest from the
  // centroid; ties go to the earliest location.
  Eigen::RowVector2d centroid = Eigen::RowVector2d::Zero();
  for (Index i : distinct) centroid += xy.row(i);
  centroid /= static_cast<double>(distinct.size());
  std::vector<Index> chosen;
  std::vector<double> mind(distinct.size(), std::numeric_limits<double>::infinity());
  {
    Index best = 0;
    double bd = -1.0;
    for (std::size_t i = 0; i < distinct.size(); ++i) {
      const double d = (xy.row(distinct[i]) - centroid).squaredNorm();
      if (d > bd) {
        bd = d;
        best = static_cast<Index>(i);
      }
    }
    chosen.push_back(best);
  }
  while (static_cast<Index>(chosen.size()) < n_knots) {
    const auto last = xy.row(distinct[chosen.back()]);
    Index best = -1;
    double bd = -1.0;
    for (std::size_t i = 0; i < distinct.size(); ++i) {
      mind[i] = std::min(mind[i], (xy.row(distinct[i]) - last).squaredNorm());
      if (mind[i] > bd) {
        bd = mind[i];
        best = static_cast<Index>(i);
      }
    }
    chosen.push_back(best);
  }
  MarginalBasis b;
  b.kind = BasisKind::radial_2d;
  b.K = K;
  b.penalty_order = 2;
  b.knots_2d.resize(n_knots, 2);
  for (Index k = 0; k < n_knots; ++k) b.knots_2d.row(k) = xy.row(distinct[chosen[k]]);
  Matrix T(n_knots, 3);
  T.col(0).setOnes();
  T.rightCols(2) = b.knots_2d;
  Eigen::ColPivHouseholderQR<Matrix> rank_qr(T);
  rank_qr.setThreshold(1e-10);
  if (rank_qr.rank() < 3) throw InvalidInput("radial_2d: knot locations are collinear");
  Eigen::HouseholderQR<Matrix> qr(T);
  const Matrix Q = qr.householderQ() * Matrix::Identity(n_knots, n_knots);
  b.constraint_basis = Q.rightCols(n_knots - 3);
  return make_simple_block(b, xy, "tp");
}

DesignBlock center_columns(const DesignBlock& d) {
  const Index p = d.X.cols();
  if (p < 2) throw InvalidInput("center_columns: need at least two columns");
  Centering c;
  c.active = true;
  c.means = d.X.colwise().mean().transpose();
  // Drop the column carrying the largest weight in the representation of
  // the constant function (ties resolve to the last column).
  const Vector ones = Vector::Ones(d.X.rows());
  const Vector w = d.X.colPivHouseholderQr().solve(ones);
  Index drop = p - 1;
  const double wmax = w.cwiseAbs().maxCoeff();
  for (Index k = p - 1; k >= 0; --k) {
    if (std::abs(w(k)) >= wmax * (1.0 - 1e-8)) {
      drop = k;
      break;
    }
  }
  c.dropped = drop;
  DesignBlock out;
  out.col_offset = d.col_offset;
  out.recipe = d.recipe;
  if (out.recipe.block_centering.active) {
    throw InvalidInput("center_columns: block is already centered");
  }
  out.recipe.block_centering = c;
  out.X = c.apply(d.X);
  for (const auto& pen : d.penalties) {
    out.penalties.push_back({c.transform_penalty(pen.S), pen.label});
  }
  return out;
}

Matrix row_kron(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw InvalidInput("row_kron: row count mismatch");
  Matrix out(a.rows(), a.cols() * b.cols());
  for (Index k = 0; k < a.cols(); ++k) {
    out.middleCols(k * b.cols(), b.cols()) = b.array().colwise() * a.col(k).array();
  }
  return out;
}

DesignBlock tensor_design(const DesignBlock& d1, const DesignBlock& d2) {
  if (d1.X.rows() != d2.X.rows()) throw InvalidInput("tensor_design: row count mismatch");
  if (d1.recipe.tensor || d2.recipe.tensor || d1.penalties.size() != 1 ||
      d2.penalties.size() != 1) {
    throw InvalidInput("tensor_design: marginals must be simple blocks with one penalty");
  }
  DesignBlock out;
  out.X = row_kron(d1.X, d2.X);
  const Index k1 = d1.X.cols(), k2 = d2.X.cols();
  out.penalties.push_back({kron(d1.penalties[0].S, Matrix::Identity(k2, k2)),
                           d1.penalties[0].label});
  out.penalties.push_back({kron(Matrix::Identity(k1, k1), d2.penalties[0].S),
                           d2.penalties[0].label});
  out.recipe.tensor = true;
  out.recipe.marginals = {d1.recipe.marginals[0], d2.recipe.marginals[0]};
  out.recipe.marginal_centering = {d1.recipe.block_centering, d2.recipe.block_centering};
  return out;
}

std::vector<DesignBlock> anova_decomposition(const DesignBlock& d1, const DesignBlock& d2) {
  DesignBlock c1 = center_columns(d1);
  DesignBlock c2 = center_columns(d2);
  DesignBlock inter = tensor_design(c1, c2);
  return {std::move(c1), std::move(c2), std::move(inter)};
}

}  // namespace mshmm
