#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "bspde/adapted_field.hpp"
#include "bspde/scenario_tree.hpp"

namespace bspde {

/// Uniform grid on (x_min, x_max) with J interior points and homogeneous
/// Dirichlet values at both ends.
class Grid {
 public:
  Grid(double x_min, double x_max, int interior_points);

  double x_min() const noexcept { return x_min_; }
  double x_max() const noexcept { return x_max_; }
  double length() const noexcept { return x_max_ - x_min_; }
  int size() const noexcept { return size_; }
  double h() const noexcept { return length() / (size_ + 1); }
  /// Interior coordinate, j = 0..J-1 (x_{j+1} in one-based numbering).
  double x(int j) const noexcept { return x_min_ + (j + 1) * h(); }
  Eigen::VectorXd points() const;
  /// Samples f at the interior points.
  Eigen::VectorXd sample(const std::function<double(double)>& f) const;
  /// h-weighted Euclidean product.
  double inner(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) const {
    return h() * a.dot(b);
  }

 private:
  double x_min_;
  double x_max_;
  int size_;
};

struct PointContext {
  double x = 0.0;
  double t = 0.0;
  int level = 0;
  NodeIndex node = 0;
};

/// A coefficient as a function of (x, t, node).
struct CoefficientFn {
  std::function<double(const PointContext&)> fn;
  /// true when the value varies with the tree node (random coefficient)
  bool node_dependent = false;

  static CoefficientFn constant(double value);
  static CoefficientFn profile(std::function<double(double x, double t)> f);
  static CoefficientFn random(std::function<double(const PointContext&)> f);

  double operator()(const PointContext& c) const { return fn(c); }
};

enum class OperatorForm {
  /// A v = (b v')' + f v' - lambda v
  Divergence,
  /// A v = b v'' + f^ v' - lambda~ v
  NonDivergence,
};

/// Functional description of b, f (or f^), lambda (or lambda~), beta_i, beta_bar_i.
struct CoefficientModel {
  OperatorForm form = OperatorForm::NonDivergence;
  CoefficientFn b = CoefficientFn::constant(1.0);
  CoefficientFn drift = CoefficientFn::constant(0.0);
  CoefficientFn killing = CoefficientFn::constant(0.0);
  std::vector<CoefficientFn> beta;
  std::vector<CoefficientFn> beta_bar;

  int brownian_count() const noexcept { return static_cast<int>(beta.size()); }
  bool deterministic() const;
};

/// Coefficients sampled on the grid at every tree level and node.
struct CoefficientSet {
  OperatorForm form = OperatorForm::NonDivergence;
  AdaptedField b;
  AdaptedField drift;
  AdaptedField killing;
  std::vector<AdaptedField> beta;
  std::vector<AdaptedField> beta_bar;

  int brownian_count() const noexcept { return static_cast<int>(beta.size()); }
  bool deterministic() const;
  /// true when every beta_i and beta_bar_i is identically zero
  bool noise_free() const;
};

CoefficientSet discretize(const CoefficientModel& model, const ScenarioTree& tree, const Grid& grid);

/// Same coefficients with lambda replaced by lambda + shift.
CoefficientSet shift_killing(CoefficientSet coeffs, double shift);

/// Second-order derivative of grid samples: centred inside, one-sided
/// three-point formulas at the two ends.
Eigen::VectorXd centered_derivative(const Eigen::Ref<const Eigen::VectorXd>& values, double h);

/// Rewrites (b v')' + f v' as b v'' + (f + b') v', with b' by finite differences.
CoefficientSet to_nondivergence(const CoefficientSet& coeffs, const Grid& grid);

/// f~ = f^ - sum_i beta_bar_i beta_i (non-divergence coefficients).
AdaptedField tilde_drift(const CoefficientSet& coeffs);
/// beta~ = sqrt(2b - sum_i beta_i^2); throws ConditionError where it is not strictly positive.
AdaptedField tilde_beta(const CoefficientSet& coeffs);

/// Tridiagonal matrix acting on interior values; lower(0) and upper(J-1) are unused.
struct TridiagonalOperator {
  Eigen::VectorXd lower;
  Eigen::VectorXd diag;
  Eigen::VectorXd upper;
  int level = 0;
  NodeIndex node = 0;

  static TridiagonalOperator zero(int size);

  int size() const noexcept { return static_cast<int>(diag.size()); }
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  TridiagonalOperator transpose() const;
  Eigen::MatrixXd dense() const;
  /// min_j |d_j| - |l_j| - |u_j|
  double dominance_margin() const;
  /// Off-diagonals non-negative (discrete maximum principle for A).
  bool off_diagonals_nonnegative() const;
};

/// Thomas elimination without pivoting; throws ConditionError on a zero pivot.
Eigen::VectorXd solve_tridiagonal(const TridiagonalOperator& m, const Eigen::Ref<const Eigen::VectorXd>& rhs);

/// (I - dt A) as a tridiagonal operator.
TridiagonalOperator implicit_system(const TridiagonalOperator& a, double dt);

TridiagonalOperator assemble_A(const CoefficientSet& coeffs, const Grid& grid, int level, NodeIndex node);
TridiagonalOperator assemble_B(const CoefficientSet& coeffs, const Grid& grid, int index, int level, NodeIndex node);
/// Literal transposes of assemble_A / assemble_B.
TridiagonalOperator assemble_A_star(const CoefficientSet& coeffs, const Grid& grid, int level, NodeIndex node);
TridiagonalOperator assemble_B_star(const CoefficientSet& coeffs, const Grid& grid, int index, int level,
                                    NodeIndex node);

/// Stencils of (b v)'' - (f^ v)' - lambda~ v and -(beta v)' + beta_bar v built
/// directly from the formulas; used to cross-check the transposes.
TridiagonalOperator analytic_A_star(const CoefficientSet& coeffs, const Grid& grid, int level, NodeIndex node);
TridiagonalOperator analytic_B_star(const CoefficientSet& coeffs, const Grid& grid, int index, int level,
                                    NodeIndex node);

struct CoercivityReport {
  double delta = 0.0;
  double worst_x = 0.0;
  int worst_level = 0;
  NodeIndex worst_node = 0;
  bool pass = false;
};

/// delta = min over (x, t, node) of b - 1/2 sum_i beta_i^2.
CoercivityReport check_coercivity(const CoefficientSet& coeffs, const Grid& grid);
CoercivityReport check_coercivity(const CoefficientSet& coeffs, const Grid& grid, int level, NodeIndex node);

/// beta_i(x, t, node) vanishes at x_min and x_max for every level and node (to `tol`).
bool beta_vanishes_at_boundary(const CoefficientModel& model, const ScenarioTree& tree, const Grid& grid,
                               double tol = 1e-12);

}  // namespace bspde
