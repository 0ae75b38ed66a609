#pragma once

// Spline, random-effect and radial bases with their penalties, plus the
// centering and tensor-product operations used to build smooth terms.

#include <optional>
#include <string>
#include <vector>

#include "mshmm/linalg.hpp"

namespace mshmm {

enum class BasisKind { bspline, cyclic_cubic, random_effect, radial_2d };

std::string to_string(BasisKind kind);
BasisKind basis_kind_from_string(const std::string& name);

/// One marginal basis: everything needed to evaluate it at new covariate
/// values and to reproduce its penalty.
struct MarginalBasis {
  BasisKind kind = BasisKind::bspline;
  int K = 0;  // number of basis functions
  int degree = 3;
  int penalty_order = 2;
  // bspline: full knot vector (K + degree + 1 entries, padded outside the
  // data range); cyclic: K knot locations in [0, period).
  Vector knots;
  // radial_2d: (K - 3) x 2 knot coordinates and K x (K - 3) basis of the
  // side-constraint null space.
  Matrix knots_2d;
  Matrix constraint_basis;
  std::optional<double> period;
  // bspline: data range used for linear extrapolation.
  double lower = 0.0;
  double upper = 0.0;

  /// Number of covariate columns consumed (2 for radial_2d, else 1).
  int input_dim() const { return kind == BasisKind::radial_2d ? 2 : 1; }

  /// Basis evaluated at the rows of z (n x input_dim()). Throws
  /// InvalidInput for values outside the basis domain.
  Matrix evaluate(const Matrix& z) const;

  /// Uncentered K x K penalty.
  Matrix penalty() const;
};

/// Sum-to-zero constraint absorbed by centering and dropping one column.
struct Centering {
  bool active = false;
  Vector means;
  Index dropped = -1;

  Matrix apply(const Matrix& x) const;
  Matrix transform_penalty(const Matrix& s) const;
  /// Maps a reduced coefficient vector back to the unconstrained one.
  Vector expand(const Vector& beta) const;
};

/// How a design block is produced from covariates.
struct BlockRecipe {
  std::vector<MarginalBasis> marginals;       // 1 or 2
  std::vector<Centering> marginal_centering;  // one per marginal
  bool tensor = false;
  Centering block_centering;

  /// Inputs: one matrix per marginal with input_dim() columns.
  Matrix evaluate(const std::vector<Matrix>& inputs) const;
};

struct DesignPenalty {
  Matrix S;
  std::string label;
};

struct DesignBlock {
  Matrix X;
  std::vector<DesignPenalty> penalties;
  Index col_offset = 0;
  BlockRecipe recipe;

  Index cols() const { return X.cols(); }
};

/// P-spline: B-spline basis with quantile-placed knots and a difference
/// penalty D^T D of the given order.
DesignBlock build_bspline(const Vector& z, int K, int degree = 3,
                          int penalty_order = 2);

/// Cyclic cubic regression spline with K knots on [0, period); the
/// coefficients are the function values at the knots.
DesignBlock build_cyclic(const Vector& z, int K, double period);

/// One-hot group indicators (groups labelled 1..K_groups), identity penalty.
DesignBlock build_random_effect(const Vector& group, int K_groups);

/// Low-rank thin-plate-type basis with K coefficients: K - 3 constrained
/// radial functions r^2 log r on space-filling knots plus {1, x, y}.
DesignBlock build_radial_2d(const Matrix& xy, int K);

/// Sum-to-zero reparameterization: columns are centered and one column is
/// dropped; penalties are transformed congruently.
DesignBlock center_columns(const DesignBlock& d);

/// Row-wise Kronecker product with the two marginal penalties
/// S1 (x) I and I (x) S2.
DesignBlock tensor_design(const DesignBlock& d1, const DesignBlock& d2);

/// [centered main effect 1, centered main effect 2, interaction of the
/// centered marginals].
std::vector<DesignBlock> anova_decomposition(const DesignBlock& d1,
                                             const DesignBlock& d2);

/// Row-wise Kronecker product of two design matrices.
Matrix row_kron(const Matrix& a, const Matrix& b);

/// Thin-plate radial function eta(r) = r^2 log(r) / (8 pi).
double thin_plate_eta(double r);

}  // namespace mshmm
