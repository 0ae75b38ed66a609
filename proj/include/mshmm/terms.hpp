#pragma once

// Declarative smooth terms and their compilation into predictor designs.

#include <optional>
#include <string>
#include <vector>

#include "mshmm/bases.hpp"
#include "mshmm/hmm.hpp"

namespace mshmm {

enum class TermMode { simple, tensor_full, tensor_anova_interaction };

/// One marginal of a smooth as written in a formula.
struct MarginalSpec {
  BasisKind kind = BasisKind::bspline;
  std::vector<std::string> vars;  // two names for radial_2d
  std::optional<int> k;           // requested basis dimension
  std::optional<double> period;
  int degree = 3;
  int penalty_order = 2;
};

struct SmoothTerm {
  std::string label;
  std::vector<MarginalSpec> marginals;
  TermMode mode = TermMode::simple;
  std::vector<bool> centered;  // per marginal
  std::string by;              // factor covariate; empty for none

  /// Checks the mode/marginal invariants.
  void validate() const;
};

/// s(...) for one marginal, te(...) and ti(...) for two. Fills label and
/// centering flags. Random-effect marginals of ti() stay uncentered so the
/// group dimension remains exchangeable.
SmoothTerm make_smooth(TermMode mode, std::vector<MarginalSpec> marginals,
                       const std::string& by = "");

enum class TermKind { smooth, factor, linear };

struct FormulaTerm {
  TermKind kind = TermKind::smooth;
  SmoothTerm smooth;
  std::string var;  // factor/linear covariate

  std::string to_string() const;
};

/// Intercept plus terms.
struct Formula {
  std::vector<FormulaTerm> terms;

  std::string to_string() const;
};

/// One coefficient block of a predictor design.
struct CompiledTerm {
  std::string label;
  TermKind kind = TermKind::smooth;
  TermMode mode = TermMode::simple;
  std::vector<std::vector<std::string>> inputs;  // covariates per marginal
  BlockRecipe recipe;
  std::string by;  // by-factor (smooth) or factor covariate (dummy)
  double level = 0.0;
  std::vector<DesignPenalty> penalties;
  Index cols = 0;

  Matrix evaluate(const ObservationTable& data) const;
};

/// Design of one linear predictor: intercept column followed by the term
/// blocks in order.
struct PredictorDesign {
  std::vector<CompiledTerm> terms;
  Matrix X;

  Index cols() const { return X.cols(); }
  /// Column offset of term k (intercept occupies column 0).
  Index term_offset(std::size_t k) const;
  Matrix evaluate(const ObservationTable& data) const;
};

/// Builds bases (knots, centering) from the covariates in data.
PredictorDesign compile_formula(const Formula& f, const ObservationTable& data);

/// Sorted distinct values of a covariate.
std::vector<double> distinct_levels(const Vector& v);

}  // namespace mshmm
