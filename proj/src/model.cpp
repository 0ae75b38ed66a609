#include "mshmm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "mshmm/errors.hpp"

namespace mshmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

RowVector softmax_with_reference(const Vector& w) {
  // First category is the reference with working value 0.
  const Index n = w.size() + 1;
  RowVector z(n);
  z(0) = 0.0;
  z.tail(n - 1) = w.transpose();
  const double m = z.maxCoeff();
  z = (z.array() - m).exp();
  return z / z.sum();
}

// Derivative of log(sum exp) weights into d eta for one softmax row with the
// diagonal as reference: eta_bar_ij = xi_ij - gamma_ij sum_k xi_ik.
void accumulate_row_adjoint(const TpmSequence& tpm, Index t, int i, const double* a, int N,
                            Matrix& eta_bar) {
  double s = 0.0;
  for (int k = 0; k < N; ++k) s += tpm(t, i, k) * a[k];
  for (int j = 0; j < N; ++j) {
    if (j == i) continue;
    const double g = tpm(t, i, j);
    eta_bar(t, offdiag_index(i, j, N)) += g * a[j] - g * s;
  }
}

double kappa_from_resultant(double R) {
  double k;
  if (R < 0.53) {
    k = 2 * R + R * R * R + 5 * std::pow(R, 5) / 6;
  } else if (R < 0.85) {
    k = -0.4 + 1.39 * R + 0.43 / (1 - R);
  } else {
    k = 1 / (R * R * R - 4 * R * R + 3 * R);
  }
  return std::clamp(k, 0.05, 100.0);
}

struct GroupStats {
  double mean = 0.0;
  double var = 0.0;
};

// Splits sorted values into N equal consecutive groups.
std::vector<GroupStats> grouped_moments(std::vector<double> x, int N) {
  std::sort(x.begin(), x.end());
  std::vector<GroupStats> out(static_cast<std::size_t>(N));
  const std::size_t n = x.size();
  for (int i = 0; i < N; ++i) {
    std::size_t lo = i * n / N, hi = (i + 1) * n / N;
    if (hi <= lo) hi = std::min(n, lo + 1);
    if (lo >= n) lo = n - 1;
    double s = 0.0, s2 = 0.0;
    for (std::size_t k = lo; k < hi; ++k) s += x[k];
    const double m = s / static_cast<double>(hi - lo);
    for (std::size_t k = lo; k < hi; ++k) s2 += (x[k] - m) * (x[k] - m);
    out[static_cast<std::size_t>(i)] = {m, hi - lo > 1 ? s2 / static_cast<double>(hi - lo - 1) : 0.0};
  }
  return out;
}

// Solves A^T x = b on the tape by Gaussian elimination with partial pivoting
// chosen on values.
std::vector<ad::Var> solve_transposed(std::vector<std::vector<ad::Var>> a, std::vector<ad::Var> b) {
  const std::size_t n = b.size();
  std::vector<std::vector<ad::Var>> m(n, std::vector<ad::Var>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m[i][j] = a[j][i];
  }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(m[r][c].value()) > std::abs(m[p][c].value())) p = r;
    }
    std::swap(m[c], m[p]);
    std::swap(b[c], b[p]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const ad::Var f = m[r][c] / m[c][c];
      for (std::size_t k = c; k < n; ++k) m[r][k] = m[r][k] - f * m[c][k];
      b[r] = b[r] - f * b[c];
    }
  }
  std::vector<ad::Var> x(n);
  for (std::size_t r = n; r-- > 0;) {
    ad::Var s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s = s - m[r][k] * x[k];
    x[r] = s / m[r][r];
  }
  return x;
}

}  // namespace

std::string to_string(DeltaMode m) {
  switch (m) {
    case DeltaMode::stationary:
      return "stationary";
    case DeltaMode::estimated:
      return "estimated";
    case DeltaMode::uniform:
      return "uniform";
  }
  return "stationary";
}

DeltaMode delta_mode_from_string(const std::string& name) {
  for (DeltaMode m : {DeltaMode::stationary, DeltaMode::estimated, DeltaMode::uniform}) {
    if (to_string(m) == name) return m;
  }
  throw InvalidInput("unknown delta mode '" + name + "'");
}

void HmmSpec::validate() const {
  if (N < 2) throw InvalidInput("model: at least two states are required");
  if (tpm_formulas.size() != static_cast<std::size_t>(N * (N - 1))) {
    throw InvalidInput("model: need one formula per off-diagonal transition entry");
  }
  if (streams.empty()) throw InvalidInput("model: at least one data stream is required");
  for (std::size_t a = 0; a < streams.size(); ++a) {
    for (std::size_t b = a + 1; b < streams.size(); ++b) {
      if (streams[a].name == streams[b].name) {
        throw InvalidInput("model: duplicate stream '" + streams[a].name + "'");
      }
    }
  }
}

const LayoutBlock& CoefficientLayout::find(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b;
  }
  throw InvalidInput("unknown coefficient block '" + name + "'");
}

void CoefficientLayout::validate() const {
  Index next = 0;
  for (const auto& b : blocks) {
    if (b.start != next || b.length <= 0) throw InvalidInput("layout: blocks must be contiguous");
    next += b.length;
  }
  if (next != total_dim) throw InvalidInput("layout: block lengths do not sum to the dimension");
}

HmmModel::HmmModel(HmmSpec spec, ObservationTable data)
    : spec_(std::move(spec)), data_(std::move(data)) {
  spec_.validate();
  data_.validate();
  if (data_.rows() == 0) throw InvalidInput("model: empty data");
  const int N = spec_.N;
  auto add = [this](const std::string& name, Index len, Link link, bool pen) {
    layout_.blocks.push_back({name, layout_.total_dim, len, link, pen});
    layout_.total_dim += len;
  };
  for (const auto& s : spec_.streams) {
    const auto it = std::find(data_.stream_names.begin(), data_.stream_names.end(), s.name);
    if (it == data_.stream_names.end()) throw InvalidInput("model: data lack stream '" + s.name + "'");
    stream_column_.push_back(static_cast<std::size_t>(it - data_.stream_names.begin()));
    emission_offset_.push_back(layout_.total_dim);
    for (const auto& p : family_params(s.family)) add(s.name + "." + p.name, N, p.link, false);
  }
  std::map<std::string, std::shared_ptr<const PredictorDesign>> cache;
  for (int e = 0; e < entries(); ++e) {
    const Formula& f = spec_.tpm_formulas[static_cast<std::size_t>(e)];
    const std::string key = f.to_string();
    auto it = cache.find(key);
    if (it == cache.end()) {
      it = cache.emplace(key, std::make_shared<const PredictorDesign>(compile_formula(f, data_))).first;
    }
    designs_.push_back(it->second);
    entry_offset_.push_back(layout_.total_dim);
    const PredictorDesign& d = *it->second;
    add(entry_name(e) + ".(Intercept)", 1, Link::identity, false);
    for (const auto& t : d.terms) {
      add(entry_name(e) + "." + t.label, t.cols, Link::identity, !t.penalties.empty());
    }
  }
  if (spec_.delta_mode == DeltaMode::estimated) {
    delta_offset_ = layout_.total_dim;
    add("delta", N - 1, Link::identity, false);
  }
  layout_.validate();
}

std::string HmmModel::entry_name(int e) const {
  const int N = spec_.N;
  const int i = e / (N - 1);
  int j = e % (N - 1);
  if (j >= i) ++j;
  if (N < 10) return "gamma" + std::to_string(i + 1) + std::to_string(j + 1);
  return "gamma[" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "]";
}

Index HmmModel::emission_index(std::size_t s, int p, int i) const {
  return emission_offset_[s] + static_cast<Index>(p) * spec_.N + i;
}

PenaltyModel HmmModel::penalties() const {
  std::vector<PenaltyBlock> blocks;
  for (int e = 0; e < entries(); ++e) {
    const PredictorDesign& d = design(e);
    for (std::size_t k = 0; k < d.terms.size(); ++k) {
      const CompiledTerm& t = d.terms[k];
      for (const auto& p : t.penalties) {
        PenaltyBlock b;
        b.S = SymMatrix::symmetrized(p.S);
        b.start = entry_offset(e) + d.term_offset(k);
        b.label = entry_name(e) + "." + p.label;
        b.default_lambda = t.mode == TermMode::simple ? 1e4 : 1e5;
        blocks.push_back(std::move(b));
      }
    }
  }
  return PenaltyModel(std::move(blocks), dim());
}

Vector HmmModel::default_theta() const {
  const int N = spec_.N;
  Vector theta = Vector::Zero(dim());
  for (std::size_t s = 0; s < spec_.streams.size(); ++s) {
    const Vector& col = data_.streams[stream_column_[s]];
    std::vector<double> x;
    for (Index t = 0; t < col.size(); ++t) {
      if (std::isfinite(col(t))) x.push_back(col(t));
    }
    const Family f = spec_.streams[s].family;
    std::vector<std::vector<double>> nat(static_cast<std::size_t>(N));
    if (f == Family::gamma) {
      std::erase_if(x, [](double v) { return !(v > 0); });
    }
    if (x.empty()) x.push_back(f == Family::gamma ? 1.0 : 0.0);
    if (f == Family::von_mises) {
      double cs = 0.0, sn = 0.0;
      for (double v : x) {
        cs += std::cos(v);
        sn += std::sin(v);
      }
      const double mu = std::atan2(sn, cs);
      // Wider angles first: state order follows increasing concentration.
      std::vector<double> dev;
      for (double v : x) dev.push_back(-std::abs(std::remainder(v - mu, 2 * std::numbers::pi)));
      std::vector<double> sorted = dev;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t n = sorted.size();
      for (int i = 0; i < N; ++i) {
        std::size_t lo = i * n / N, hi = std::max((i + 1) * n / N, lo + 1);
        lo = std::min(lo, n - 1);
        hi = std::min(hi, n);
        double c = 0.0;
        for (std::size_t k = lo; k < hi; ++k) c += std::cos(sorted[k]);
        const double R = std::clamp(c / static_cast<double>(hi - lo), 0.0, 0.999);
        nat[static_cast<std::size_t>(i)] = {mu, kappa_from_resultant(R)};
      }
    } else {
      const auto g = grouped_moments(x, N);
      for (int i = 0; i < N; ++i) {
        const double m = g[static_cast<std::size_t>(i)].mean;
        const double v = g[static_cast<std::size_t>(i)].var;
        std::vector<double>& p = nat[static_cast<std::size_t>(i)];
        switch (f) {
          case Family::gamma: {
            const double sd = v > 0 ? std::sqrt(v) : m;
            p = {std::clamp(m * m / (sd * sd), 0.1, 100.0), sd * sd / m};
            break;
          }
          case Family::normal:
            p = {m, std::max(std::sqrt(v), 1e-3 * (1.0 + std::abs(m)))};
            break;
          case Family::poisson:
            p = {std::max(m, 0.1)};
            break;
          case Family::negative_binomial: {
            const double mu = std::max(m, 0.1);
            const double over = v - mu;
            p = {over > 0 ? std::clamp(mu * mu / over, 0.1, 100.0) : 100.0, mu};
            break;
          }
          case Family::bernoulli:
            p = {std::clamp(m, 0.05, 0.95)};
            break;
          case Family::von_mises:
            break;
        }
      }
    }
    const auto params = family_params(f);
    for (int i = 0; i < N; ++i) {
      for (std::size_t p = 0; p < params.size(); ++p) {
        theta(emission_index(s, static_cast<int>(p), i)) =
            apply_link(params[p].link, nat[static_cast<std::size_t>(i)][p]);
      }
    }
  }
  for (int e = 0; e < entries(); ++e) theta(entry_offset(e)) = -2.0;
  return theta;
}

void HmmModel::check_theta(const Vector& theta) const {
  if (theta.size() != dim()) throw InvalidInput("model: theta has the wrong length");
  if (!theta.allFinite()) throw InvalidInput("model: non-finite theta");
}

Matrix HmmModel::predictors(const Vector& theta) const {
  check_theta(theta);
  Matrix eta(data_.rows(), entries());
  for (int e = 0; e < entries(); ++e) {
    const Matrix& X = design(e).X;
    eta.col(e) = X * theta.segment(entry_offset(e), X.cols());
  }
  return eta;
}

Matrix HmmModel::predictors(const Vector& theta, const ObservationTable& newdata) const {
  check_theta(theta);
  Matrix eta(newdata.rows(), entries());
  std::map<const PredictorDesign*, Matrix> cache;
  for (int e = 0; e < entries(); ++e) {
    const PredictorDesign* d = designs_[static_cast<std::size_t>(e)].get();
    auto it = cache.find(d);
    if (it == cache.end()) it = cache.emplace(d, d->evaluate(newdata)).first;
    eta.col(e) = it->second * theta.segment(entry_offset(e), d->cols());
  }
  return eta;
}

TpmSequence HmmModel::tpm(const Vector& theta) const {
  return tpm_from_predictors(predictors(theta), spec_.N);
}

EmissionParams HmmModel::emissions(const Vector& theta) const {
  check_theta(theta);
  EmissionParams ep;
  for (std::size_t s = 0; s < spec_.streams.size(); ++s) {
    const auto params = family_params(spec_.streams[s].family);
    Matrix nat(static_cast<Index>(params.size()), spec_.N);
    for (std::size_t p = 0; p < params.size(); ++p) {
      for (int i = 0; i < spec_.N; ++i) {
        nat(static_cast<Index>(p), i) =
            apply_link_inverse(params[p].link, theta(emission_index(s, static_cast<int>(p), i)));
      }
    }
    ep.families.push_back(spec_.streams[s].family);
    ep.natural.push_back(nat);
  }
  return ep;
}

Matrix HmmModel::log_densities(const Vector& theta) const {
  const EmissionParams ep = emissions(theta);
  const Index T = data_.rows();
  Matrix lp = Matrix::Zero(T, spec_.N);
  for (std::size_t s = 0; s < spec_.streams.size(); ++s) {
    const Vector& x = data_.streams[stream_column_[s]];
    for (int i = 0; i < spec_.N; ++i) {
      const Vector nat = ep.natural[s].col(i);
      const std::span<const double> p(nat.data(), static_cast<std::size_t>(nat.size()));
      for (Index t = 0; t < T; ++t) {
        if (!std::isnan(x(t))) lp(t, i) += log_density(ep.families[s], p, x(t));
      }
    }
  }
  return lp;
}

std::vector<RowVector> HmmModel::initial(const Vector& theta, const TpmSequence& tpm) const {
  const int N = spec_.N;
  std::vector<RowVector> out;
  for (const auto& tr : data_.tracks) {
    switch (spec_.delta_mode) {
      case DeltaMode::uniform:
        out.push_back(RowVector::Constant(N, 1.0 / N));
        break;
      case DeltaMode::estimated:
        out.push_back(softmax_with_reference(theta.segment(delta_offset_, N - 1)));
        break;
      case DeltaMode::stationary:
        out.push_back(stationary_distribution(tpm.at(tr.begin)));
        break;
    }
  }
  return out;
}

double HmmModel::loglik(const Vector& theta) const {
  const TpmSequence g = tpm(theta);
  return forward_loglik(log_densities(theta), g, data_.tracks, initial(theta, g)).loglik;
}

double HmmModel::loglik_gradient(const Vector& theta, Vector& grad) const {
  check_theta(theta);
  const int N = spec_.N;
  const Index T = data_.rows();
  const TpmSequence g = tpm(theta);
  const std::vector<RowVector> init = initial(theta, g);

  // Log densities and per-observation scores of the working parameters.
  const EmissionParams ep = emissions(theta);
  Matrix lp = Matrix::Zero(T, N);
  std::vector<std::vector<Matrix>> score(spec_.streams.size());
  for (std::size_t s = 0; s < spec_.streams.size(); ++s) {
    const Family f = spec_.streams[s].family;
    const int P = static_cast<int>(family_params(f).size());
    score[s].assign(static_cast<std::size_t>(P), Matrix::Zero(T, N));
    const Vector& x = data_.streams[stream_column_[s]];
    double w[2], gw[2];
    for (int i = 0; i < N; ++i) {
      for (int p = 0; p < P; ++p) w[p] = theta(emission_index(s, p, i));
      for (Index t = 0; t < T; ++t) {
        if (std::isnan(x(t))) continue;
        lp(t, i) += log_density_working(f, {w, static_cast<std::size_t>(P)}, x(t),
                                        {gw, static_cast<std::size_t>(P)});
        for (int p = 0; p < P; ++p) score[s][static_cast<std::size_t>(p)](t, i) = gw[p];
      }
    }
  }

  Matrix phi(T, N), ptil(T, N);
  Vector c(T);
  Matrix eta_bar = Matrix::Zero(T, entries());
  Matrix post(T, N);
  Vector delta_bar = Vector::Zero(N > 1 ? N - 1 : 0);
  double ll = 0.0;
  std::vector<double> beta(N), prev(N), a(N);

  for (std::size_t k = 0; k < data_.tracks.size(); ++k) {
    const Track& tr = data_.tracks[k];
    for (Index t = tr.begin; t < tr.end; ++t) {
      const double m = lp.row(t).maxCoeff();
      if (m == kNegInf) {
        throw NumericalUnderflow(static_cast<std::size_t>(t),
                                 "forward: all state densities are zero at t = " + std::to_string(t + 1));
      }
      double ct = 0.0;
      for (int j = 0; j < N; ++j) {
        ptil(t, j) = std::exp(lp(t, j) - m);
        double aj;
        if (t == tr.begin) {
          aj = init[k](j);
        } else {
          aj = 0.0;
          for (int i = 0; i < N; ++i) aj += phi(t - 1, i) * g(t, i, j);
        }
        phi(t, j) = aj * ptil(t, j);
        ct += phi(t, j);
      }
      if (!(ct > 0.0)) {
        throw NumericalUnderflow(static_cast<std::size_t>(t),
                                 "forward: forward vector vanished at t = " + std::to_string(t + 1));
      }
      phi.row(t) /= ct;
      c(t) = ct;
      ll += std::log(ct) + m;
    }
    // Backward sweep with the same scaling.
    std::fill(beta.begin(), beta.end(), 1.0);
    for (Index t = tr.end - 1; t > tr.begin; --t) {
      for (int j = 0; j < N; ++j) {
        post(t, j) = phi(t, j) * beta[j];
        a[j] = ptil(t, j) * beta[j] / c(t);
      }
      std::vector<double> arow(N);
      for (int i = 0; i < N; ++i) {
        double b = 0.0;
        for (int j = 0; j < N; ++j) {
          b += g(t, i, j) * a[j];
          arow[j] = phi(t - 1, i) * a[j];
        }
        prev[i] = b;
        accumulate_row_adjoint(g, t, i, arow.data(), N, eta_bar);
      }
      beta.swap(prev);
    }
    const Index t0 = tr.begin;
    Vector gbar(N);
    for (int j = 0; j < N; ++j) {
      post(t0, j) = phi(t0, j) * beta[j];
      gbar(j) = ptil(t0, j) * beta[j] / c(t0);
    }
    if (spec_.delta_mode == DeltaMode::stationary) {
      const Matrix G = g.at(t0);
      const Matrix M = Matrix::Identity(N, N) - G + Matrix::Ones(N, N);
      const Vector v = M.fullPivLu().solve(gbar);
      std::vector<double> arow(N);
      for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) arow[j] = init[k](i) * v(j);
        accumulate_row_adjoint(g, t0, i, arow.data(), N, eta_bar);
      }
    } else if (spec_.delta_mode == DeltaMode::estimated) {
      const double s = init[k].dot(gbar.transpose());
      for (int j = 1; j < N; ++j) delta_bar(j - 1) += init[k](j) * (gbar(j) - s);
    }
  }

  grad = Vector::Zero(dim());
  for (std::size_t s = 0; s < spec_.streams.size(); ++s) {
    for (std::size_t p = 0; p < score[s].size(); ++p) {
      for (int i = 0; i < N; ++i) {
        grad(emission_index(s, static_cast<int>(p), i)) = post.col(i).dot(score[s][p].col(i));
      }
    }
  }
  for (int e = 0; e < entries(); ++e) {
    const Matrix& X = design(e).X;
    grad.segment(entry_offset(e), X.cols()) = X.transpose() * eta_bar.col(e);
  }
  if (spec_.delta_mode == DeltaMode::estimated) grad.segment(delta_offset_, N - 1) = delta_bar;
  return ll;
}

double HmmModel::loglik_tape(const Vector& theta, Vector* grad) const {
  check_theta(theta);
  using ad::Var;
  const int N = spec_.N;
  const Index T = data_.rows();
  ad::Tape tape;
  const std::vector<Var> th = tape.variables(theta);

  // Linear predictors, one node per (t, entry).
  std::vector<std::vector<Var>> eta(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) {
    for (int e = 0; e < entries(); ++e) {
      const Matrix& X = design(e).X;
      const Index off = entry_offset(e);
      std::vector<Var> parents(th.begin() + off, th.begin() + off + X.cols());
      std::vector<double> w(static_cast<std::size_t>(X.cols()));
      for (Index c = 0; c < X.cols(); ++c) w[static_cast<std::size_t>(c)] = X(t, c);
      const double v = X.row(t).dot(theta.segment(off, X.cols()));
      eta[static_cast<std::size_t>(t)].push_back(tape.node(v, parents, w));
    }
  }
  auto log_gamma = [&](Index t) {
    std::vector<std::vector<Var>> lg(static_cast<std::size_t>(N), std::vector<Var>(N));
    for (int i = 0; i < N; ++i) {
      std::vector<Var> row(N);
      for (int j = 0; j < N; ++j) {
        row[j] = j == i ? Var(0.0) : eta[static_cast<std::size_t>(t)][offdiag_index(i, j, N)];
      }
      const Var lse = ad::log_sum_exp(row);
      for (int j = 0; j < N; ++j) lg[i][j] = row[j] - lse;
    }
    return lg;
  };
  auto log_dens = [&](Index t, int i) {
    Var acc(0.0);
    for (std::size_t s = 0; s < spec_.streams.size(); ++s) {
      const double x = data_.streams[stream_column_[s]](t);
      if (std::isnan(x)) continue;
      const int P = static_cast<int>(family_params(spec_.streams[s].family).size());
      std::vector<Var> w;
      for (int p = 0; p < P; ++p) w.push_back(th[static_cast<std::size_t>(emission_index(s, p, i))]);
      acc = acc + log_density_working(spec_.streams[s].family, w, x);
    }
    return acc;
  };

  Var total(0.0);
  for (const auto& tr : data_.tracks) {
    std::vector<Var> ldelta(N);
    switch (spec_.delta_mode) {
      case DeltaMode::uniform:
        for (int j = 0; j < N; ++j) ldelta[j] = Var(-std::log(static_cast<double>(N)));
        break;
      case DeltaMode::estimated: {
        std::vector<Var> z{Var(0.0)};
        for (int j = 1; j < N; ++j) z.push_back(th[static_cast<std::size_t>(delta_offset_ + j - 1)]);
        const Var lse = ad::log_sum_exp(z);
        for (int j = 0; j < N; ++j) ldelta[j] = z[j] - lse;
        break;
      }
      case DeltaMode::stationary: {
        const auto lg = log_gamma(tr.begin);
        std::vector<std::vector<Var>> M(N, std::vector<Var>(N));
        for (int i = 0; i < N; ++i) {
          for (int j = 0; j < N; ++j) M[i][j] = (i == j ? 2.0 : 1.0) - ad::exp(lg[i][j]);
        }
        const auto d = solve_transposed(M, std::vector<Var>(N, Var(1.0)));
        for (int j = 0; j < N; ++j) ldelta[j] = ad::log(d[j]);
        break;
      }
    }
    std::vector<Var> la(N);
    for (int j = 0; j < N; ++j) la[j] = ldelta[j] + log_dens(tr.begin, j);
    for (Index t = tr.begin + 1; t < tr.end; ++t) {
      const auto lg = log_gamma(t);
      std::vector<Var> next(N);
      for (int j = 0; j < N; ++j) {
        std::vector<Var> terms(N);
        for (int i = 0; i < N; ++i) terms[i] = la[i] + lg[i][j];
        next[j] = ad::log_sum_exp(terms) + log_dens(t, j);
      }
      la = next;
    }
    total = total + ad::log_sum_exp(la);
  }
  if (grad) *grad = tape.gradient(total, th);
  return total.value();
}

std::vector<int> HmmModel::viterbi(const Vector& theta) const {
  const TpmSequence g = tpm(theta);
  return mshmm::viterbi(log_densities(theta), g, data_.tracks, initial(theta, g));
}

std::vector<int> HmmModel::simulate(const Vector& theta, std::uint64_t seed,
                                    std::vector<Vector>& out) const {
  const TpmSequence g = tpm(theta);
  std::mt19937_64 rng(seed);
  return simulate_path(g, data_.tracks, initial(theta, g), emissions(theta), rng, out);
}

}  // namespace mshmm
