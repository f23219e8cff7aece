#pragma once

#include <vector>

#include <Eigen/Dense>

#include "bspde/scenario_tree.hpp"

namespace bspde {

enum class Measurability {
  /// one row per level, shared by every node
  Deterministic,
  /// one row per node at each level
  Adapted,
};

/// Space-time random field u[level][node][grid point] on a range of tree levels.
///
/// The value at (level, node) is stored per node, so adaptedness is
/// structural: nothing at level t can depend on a descendant. Deterministic
/// fields keep a single row per level and answer every node with it.
class AdaptedField {
 public:
  AdaptedField() = default;

  static AdaptedField zeros(const ScenarioTree& tree, int first_level, int last_level, int grid_size,
                            Measurability measurability);
  /// Deterministic field with the same profile at every level in range.
  static AdaptedField constant_profile(int first_level, int last_level, const Eigen::VectorXd& profile);
  /// Single-level deterministic field (terminal data, xi).
  static AdaptedField deterministic_terminal(int level, const Eigen::VectorXd& profile);

  int first_level() const noexcept { return first_level_; }
  int last_level() const noexcept { return first_level_ + static_cast<int>(levels_.size()) - 1; }
  bool has_level(int level) const noexcept { return level >= first_level_ && level <= last_level(); }
  int grid_size() const noexcept { return grid_size_; }
  Measurability measurability() const noexcept { return measurability_; }
  bool is_deterministic() const noexcept { return measurability_ == Measurability::Deterministic; }
  bool empty() const noexcept { return levels_.empty(); }

  /// Stored rows at `level` (1 when deterministic).
  NodeIndex rows_at(int level) const { return level_block(level).rows(); }

  RowMatrix& level(int t) { return levels_.at(static_cast<std::size_t>(t - first_level_)); }
  const RowMatrix& level(int t) const { return level_block(t); }

  Eigen::Map<const Eigen::VectorXd> at(int t, NodeIndex node) const {
    const RowMatrix& m = level_block(t);
    return {m.row(is_deterministic() ? 0 : node).data(), grid_size_};
  }
  Eigen::Map<Eigen::VectorXd> at(int t, NodeIndex node) {
    RowMatrix& m = level(t);
    return {m.row(is_deterministic() ? 0 : node).data(), grid_size_};
  }

  /// Copy with every level expanded to one row per node of `tree`.
  AdaptedField expanded(const ScenarioTree& tree) const;

  /// E[ h * sum_j u(level, ., j)^2 ], nodes at a level being equiprobable.
  double mean_square(int level, double h) const;

  /// Largest |value| anywhere in the field.
  double max_abs() const;

  AdaptedField& operator*=(double s);
  AdaptedField& operator+=(const AdaptedField& other);

 private:
  const RowMatrix& level_block(int t) const { return levels_.at(static_cast<std::size_t>(t - first_level_)); }

  int first_level_ = 0;
  int grid_size_ = 0;
  Measurability measurability_ = Measurability::Deterministic;
  std::vector<RowMatrix> levels_;
};

AdaptedField operator*(double s, AdaptedField field);
AdaptedField operator+(AdaptedField a, const AdaptedField& b);
/// Pointwise product; adapted if either factor is.
AdaptedField hadamard(const AdaptedField& a, const AdaptedField& b);

}  // namespace bspde
