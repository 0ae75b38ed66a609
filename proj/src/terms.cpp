#include "mshmm/terms.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mshmm/errors.hpp"

namespace mshmm {

namespace {

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(15);
  os << v;
  return os.str();
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> all_vars(const SmoothTerm& t) {
  std::vector<std::string> v;
  for (const auto& m : t.marginals) v.insert(v.end(), m.vars.begin(), m.vars.end());
  return v;
}

std::string mode_name(TermMode m) {
  switch (m) {
    case TermMode::simple:
      return "s";
    case TermMode::tensor_full:
      return "te";
    case TermMode::tensor_anova_interaction:
      return "ti";
  }
  return "s";
}

Matrix gather_inputs(const ObservationTable& data, const std::vector<std::string>& vars,
                     const std::vector<Index>* rows) {
  const Index n = rows ? static_cast<Index>(rows->size()) : data.rows();
  Matrix z(n, static_cast<Index>(vars.size()));
  for (std::size_t c = 0; c < vars.size(); ++c) {
    const Vector& col = data.covariate(vars[c]);
    for (Index r = 0; r < n; ++r) {
      const double v = rows ? col((*rows)[static_cast<std::size_t>(r)]) : col(r);
      if (std::isnan(v)) {
        throw InvalidInput("covariate '" + vars[c] + "' has missing values");
      }
      z(r, static_cast<Index>(c)) = v;
    }
  }
  return z;
}

std::vector<Index> level_rows(const Vector& v, double level) {
  std::vector<Index> rows;
  for (Index t = 0; t < v.size(); ++t) {
    if (v(t) == level) rows.push_back(t);
  }
  return rows;
}

DesignBlock build_marginal(const MarginalSpec& m, const Matrix& z) {
  switch (m.kind) {
    case BasisKind::bspline:
      return build_bspline(z.col(0), m.k.value_or(10), m.degree, m.penalty_order);
    case BasisKind::cyclic_cubic: {
      if (!m.period) throw InvalidInput("cyclic term on '" + m.vars[0] + "' needs a period");
      // k counts knots including the wrapped end point, as in cc smooths.
      return build_cyclic(z.col(0), m.k.value_or(10) - 1, *m.period);
    }
    case BasisKind::random_effect: {
      int K = 0;
      for (Index r = 0; r < z.rows(); ++r) K = std::max(K, static_cast<int>(z(r, 0)));
      return build_random_effect(z.col(0), m.k.value_or(K));
    }
    case BasisKind::radial_2d:
      return build_radial_2d(z, m.k.value_or(10));
  }
  throw InvalidInput("unknown basis kind");
}

DesignBlock build_smooth(const SmoothTerm& t, const ObservationTable& data,
                         const std::vector<Index>* rows) {
  std::vector<DesignBlock> parts;
  for (const auto& m : t.marginals) parts.push_back(build_marginal(m, gather_inputs(data, m.vars, rows)));
  switch (t.mode) {
    case TermMode::simple:
      return t.centered[0] ? center_columns(parts[0]) : parts[0];
    case TermMode::tensor_full:
      return center_columns(tensor_design(parts[0], parts[1]));
    case TermMode::tensor_anova_interaction: {
      const DesignBlock a = t.centered[0] ? center_columns(parts[0]) : parts[0];
      const DesignBlock b = t.centered[1] ? center_columns(parts[1]) : parts[1];
      return tensor_design(a, b);
    }
  }
  throw InvalidInput("unknown term mode");
}

CompiledTerm compile_block(const SmoothTerm& t, const ObservationTable& data,
                           const std::vector<Index>* rows, const std::string& label,
                           double level) {
  CompiledTerm c;
  c.label = label;
  c.kind = TermKind::smooth;
  c.mode = t.mode;
  for (const auto& m : t.marginals) c.inputs.push_back(m.vars);
  c.by = t.by;
  c.level = level;
  DesignBlock d = build_smooth(t, data, rows);
  c.recipe = d.recipe;
  c.cols = d.cols();
  for (std::size_t k = 0; k < d.penalties.size(); ++k) {
    DesignPenalty p = d.penalties[k];
    p.label = d.penalties.size() == 1 ? label : label + "." + std::to_string(k + 1);
    c.penalties.push_back(p);
  }
  return c;
}

}  // namespace

void SmoothTerm::validate() const {
  if (marginals.empty() || marginals.size() > 2) {
    throw InvalidInput(label + ": a smooth has one or two marginals");
  }
  if (mode != TermMode::simple && marginals.size() != 2) {
    throw InvalidInput(label + ": tensor terms need exactly two marginals");
  }
  if (mode == TermMode::simple && marginals.size() != 1) {
    throw InvalidInput(label + ": s() takes a single marginal");
  }
  if (centered.size() != marginals.size()) throw InvalidInput(label + ": centering flags");
  for (const auto& m : marginals) {
    const std::size_t want = m.kind == BasisKind::radial_2d ? 2 : 1;
    if (m.vars.size() != want) {
      throw InvalidInput(label + ": basis '" + to_string(m.kind) + "' takes " +
                         std::to_string(want) + " covariate(s)");
    }
    if (m.kind == BasisKind::cyclic_cubic && !(m.period && *m.period > 0)) {
      throw InvalidInput(label + ": cyclic basis needs a positive period");
    }
  }
}

SmoothTerm make_smooth(TermMode mode, std::vector<MarginalSpec> marginals, const std::string& by) {
  SmoothTerm t;
  t.mode = mode;
  t.marginals = std::move(marginals);
  t.by = by;
  std::vector<std::string> vars = all_vars(t);
  t.label = mode_name(mode) + "(" + join(vars, ",") + ")";
  for (const auto& m : t.marginals) {
    bool c = true;
    if (mode == TermMode::tensor_full) c = false;
    if (m.kind == BasisKind::random_effect) c = false;
    t.centered.push_back(c);
  }
  t.validate();
  return t;
}

std::string FormulaTerm::to_string() const {
  if (kind == TermKind::factor) return "factor(" + var + ")";
  if (kind == TermKind::linear) return var;
  const SmoothTerm& t = smooth;
  std::vector<std::string> args = all_vars(t);
  auto tuple = [&](auto&& f) {
    std::vector<std::string> xs;
    for (const auto& m : t.marginals) xs.push_back(f(m));
    return xs.size() == 1 ? xs[0] : "(" + join(xs, ",") + ")";
  };
  args.push_back("bs=" + tuple([](const MarginalSpec& m) { return mshmm::to_string(m.kind); }));
  bool any_radial = false, any_k = false, any_period = false, any_order = false;
  for (const auto& m : t.marginals) {
    any_radial |= m.kind == BasisKind::radial_2d;
    any_k |= m.k.has_value();
    any_period |= m.period.has_value();
    any_order |= m.kind == BasisKind::bspline && (m.penalty_order != 2 || m.degree != 3);
  }
  if (any_radial && t.marginals.size() == 2) {
    args.push_back("d=" + tuple([](const MarginalSpec& m) { return std::to_string(m.vars.size()); }));
  }
  if (any_k) {
    args.push_back("k=" + tuple([](const MarginalSpec& m) {
                     return m.k ? std::to_string(*m.k) : std::string("NA");
                   }));
  }
  if (any_period) {
    args.push_back("period=" + tuple([](const MarginalSpec& m) {
                     return m.period ? format_number(*m.period) : std::string("NA");
                   }));
  }
  if (any_order) {
    args.push_back("m=" + tuple([](const MarginalSpec& m) { return std::to_string(m.penalty_order); }));
    args.push_back("degree=" + tuple([](const MarginalSpec& m) { return std::to_string(m.degree); }));
  }
  if (!t.by.empty()) args.push_back("by=" + t.by);
  return mode_name(t.mode) + "(" + join(args, ", ") + ")";
}

std::string Formula::to_string() const {
  std::vector<std::string> parts{"1"};
  for (const auto& t : terms) parts.push_back(t.to_string());
  return join(parts, " + ");
}

std::vector<double> distinct_levels(const Vector& v) {
  std::vector<double> out;
  for (Index t = 0; t < v.size(); ++t) {
    if (!std::isnan(v(t))) out.push_back(v(t));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Matrix CompiledTerm::evaluate(const ObservationTable& data) const {
  const Index T = data.rows();
  switch (kind) {
    case TermKind::linear:
      return gather_inputs(data, {by}, nullptr);
    case TermKind::factor: {
      const Vector& v = data.covariate(by);
      Matrix x(T, 1);
      for (Index t = 0; t < T; ++t) x(t, 0) = v(t) == level ? 1.0 : 0.0;
      return x;
    }
    case TermKind::smooth:
      break;
  }
  if (by.empty()) {
    std::vector<Matrix> in;
    for (const auto& vars : inputs) in.push_back(gather_inputs(data, vars, nullptr));
    return recipe.evaluate(in);
  }
  const std::vector<Index> rows = level_rows(data.covariate(by), level);
  Matrix x = Matrix::Zero(T, cols);
  if (rows.empty()) return x;
  std::vector<Matrix> in;
  for (const auto& vars : inputs) in.push_back(gather_inputs(data, vars, &rows));
  const Matrix sub = recipe.evaluate(in);
  for (std::size_t r = 0; r < rows.size(); ++r) x.row(rows[r]) = sub.row(static_cast<Index>(r));
  return x;
}

Index PredictorDesign::term_offset(std::size_t k) const {
  Index off = 1;
  for (std::size_t j = 0; j < k; ++j) off += terms[j].cols;
  return off;
}

Matrix PredictorDesign::evaluate(const ObservationTable& data) const {
  const Index T = data.rows();
  Index p = 1;
  for (const auto& t : terms) p += t.cols;
  Matrix x(T, p);
  x.col(0).setOnes();
  Index off = 1;
  for (const auto& t : terms) {
    x.middleCols(off, t.cols) = t.evaluate(data);
    off += t.cols;
  }
  return x;
}

PredictorDesign compile_formula(const Formula& f, const ObservationTable& data) {
  PredictorDesign d;
  for (const auto& ft : f.terms) {
    switch (ft.kind) {
      case TermKind::linear: {
        CompiledTerm c;
        c.kind = TermKind::linear;
        c.label = ft.var;
        c.by = ft.var;
        c.cols = 1;
        d.terms.push_back(c);
        break;
      }
      case TermKind::factor: {
        const auto levels = distinct_levels(data.covariate(ft.var));
        if (levels.size() < 2) {
          throw InvalidInput("factor(" + ft.var + ") needs at least two levels");
        }
        for (std::size_t k = 1; k < levels.size(); ++k) {
          CompiledTerm c;
          c.kind = TermKind::factor;
          c.label = ft.var + "[" + format_number(levels[k]) + "]";
          c.by = ft.var;
          c.level = levels[k];
          c.cols = 1;
          d.terms.push_back(c);
        }
        break;
      }
      case TermKind::smooth: {
        const SmoothTerm& t = ft.smooth;
        t.validate();
        if (t.by.empty()) {
          d.terms.push_back(compile_block(t, data, nullptr, t.label, 0.0));
        } else {
          const Vector& byv = data.covariate(t.by);
          for (double level : distinct_levels(byv)) {
            const auto rows = level_rows(byv, level);
            const std::string label = t.label + ":" + t.by + "[" + format_number(level) + "]";
            d.terms.push_back(compile_block(t, data, &rows, label, level));
          }
        }
        break;
      }
    }
  }
  d.X = d.evaluate(data);
  return d;
}

}  // namespace mshmm
