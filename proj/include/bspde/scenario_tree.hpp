#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace bspde {

using NodeIndex = std::int64_t;

/// Row-major dense block; one row per tree node, one column per grid point.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TreeOptions {
  /// Upper bound on the leaf count (2^N)^M.
  NodeIndex node_budget = NodeIndex{1} << 20;
};

/// Finite filtered probability space driven by N Rademacher walks.
///
/// Every node at level t has 2^N children, one per sign pattern of the N
/// increments, each reached with probability 2^-N. Branch b moves component i
/// by +sqrt(dt) when bit i of b is set and by -sqrt(dt) otherwise. Nodes are
/// numbered level by level, so the children of node n at level t are the
/// contiguous range [n * 2^N, (n + 1) * 2^N) at level t + 1.
///
/// A collapsed tree has a single node per level and zero increments. It
/// represents the trivial filtration and is what deterministic problems are
/// solved on, which lets them use many more time steps than a full tree.
class ScenarioTree {
 public:
  static ScenarioTree build(int steps, int brownian_count, double horizon, TreeOptions options = {});
  static ScenarioTree collapsed(int steps, int brownian_count, double horizon);

  int steps() const noexcept { return steps_; }
  int brownian_count() const noexcept { return brownian_count_; }
  double horizon() const noexcept { return horizon_; }
  double dt() const noexcept { return horizon_ / steps_; }
  double time(int level) const noexcept { return level * dt(); }
  bool is_collapsed() const noexcept { return branching_ == 1; }

  int branching() const noexcept { return branching_; }
  NodeIndex nodes_at(int level) const;
  NodeIndex leaf_count() const { return nodes_at(steps_); }

  NodeIndex child(NodeIndex node, int branch) const noexcept { return node * branching_ + branch; }
  NodeIndex parent(NodeIndex node) const noexcept { return node / branching_; }
  int branch_of(NodeIndex node) const noexcept { return static_cast<int>(node % branching_); }
  /// Ancestor at `ancestor_level` of `node` sitting at `level`.
  NodeIndex ancestor(NodeIndex node, int level, int ancestor_level) const;

  double branch_probability() const noexcept { return 1.0 / branching_; }
  double node_probability(int level) const { return 1.0 / static_cast<double>(nodes_at(level)); }

  /// Increments (one per Brownian component) leading into a child through `branch`.
  std::span<const double> increments(int branch) const {
    return {increments_.data() + static_cast<std::size_t>(branch) * brownian_count_,
            static_cast<std::size_t>(brownian_count_)};
  }

 private:
  ScenarioTree(int steps, int brownian_count, double horizon, int branching);

  int steps_;
  int brownian_count_;
  double horizon_;
  int branching_;
  std::vector<double> increments_;
};

struct MartingaleRepresentation {
  double mean = 0.0;
  std::vector<double> chi;
  /// max over children of |X_c - mean - sum_i chi_i dw_i^c|
  double residual = 0.0;
};

/// Joint representation of a block of child values, one column per grid point.
struct FieldRepresentation {
  Eigen::VectorXd mean;
  std::vector<Eigen::VectorXd> chi;
  double residual = 0.0;
  /// max |X_c| over the block, used to scale the residual tolerance
  double scale = 0.0;
};

/// Probability-weighted average of the values at the children of one node.
double conditional_expectation(std::span<const double> child_values, const ScenarioTree& tree);

/// Writes X_c = mean + sum_i chi_i dw_i^c for every child c. The coefficients
/// are the orthogonal projection onto (1, dw_1, ..., dw_N), which is exact for
/// N = 1; for larger N a residual above `tolerance * max(1, max|X|)` means the
/// values carry a component that is not spanned by the increments.
MartingaleRepresentation martingale_representation(std::span<const double> child_values, const ScenarioTree& tree,
                                                   double tolerance = 1e-10);

/// Vectorised variant: `children` has one row per branch.
FieldRepresentation represent_children(const Eigen::Ref<const RowMatrix>& children, const ScenarioTree& tree,
                                       double tolerance = 1e-10);

/// Node index at every level 0..M along one pseudo-random root-to-leaf path.
std::vector<NodeIndex> sample_path(const ScenarioTree& tree, std::uint64_t seed);

}  // namespace bspde
