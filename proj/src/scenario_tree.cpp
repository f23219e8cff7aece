#include "bspde/scenario_tree.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "bspde/errors.hpp"

namespace bspde {

namespace {

constexpr int kMaxBrownian = 3;

}  // namespace

ScenarioTree::ScenarioTree(int steps, int brownian_count, double horizon, int branching)
    : steps_(steps), brownian_count_(brownian_count), horizon_(horizon), branching_(branching) {
  increments_.assign(static_cast<std::size_t>(branching_) * brownian_count_, 0.0);
  if (branching_ == 1) return;
  const double step = std::sqrt(dt());
  for (int b = 0; b < branching_; ++b) {
    for (int i = 0; i < brownian_count_; ++i) {
      increments_[static_cast<std::size_t>(b) * brownian_count_ + i] = ((b >> i) & 1) ? step : -step;
    }
  }
}

ScenarioTree ScenarioTree::build(int steps, int brownian_count, double horizon, TreeOptions options) {
  if (steps < 1) throw DomainError("scenario tree: step count must be >= 1");
  if (brownian_count < 1 || brownian_count > kMaxBrownian)
    throw DomainError("scenario tree: Brownian count must be in [1, 3]");
  if (!(horizon > 0.0)) throw DomainError("scenario tree: horizon must be positive");

  const NodeIndex branching = NodeIndex{1} << brownian_count;
  NodeIndex leaves = 1;
  for (int t = 0; t < steps; ++t) {
    if (leaves > options.node_budget / branching) {
      std::ostringstream msg;
      msg << "scenario tree: (2^" << brownian_count << ")^" << steps << " leaves exceed the node budget of "
          << options.node_budget;
      throw SizeError(msg.str());
    }
    leaves *= branching;
  }
  return ScenarioTree(steps, brownian_count, horizon, static_cast<int>(branching));
}

ScenarioTree ScenarioTree::collapsed(int steps, int brownian_count, double horizon) {
  if (steps < 1) throw DomainError("scenario tree: step count must be >= 1");
  if (brownian_count < 1 || brownian_count > kMaxBrownian)
    throw DomainError("scenario tree: Brownian count must be in [1, 3]");
  if (!(horizon > 0.0)) throw DomainError("scenario tree: horizon must be positive");
  return ScenarioTree(steps, brownian_count, horizon, 1);
}

NodeIndex ScenarioTree::nodes_at(int level) const {
  if (level < 0 || level > steps_) throw DomainError("scenario tree: level out of range");
  NodeIndex n = 1;
  for (int t = 0; t < level; ++t) n *= branching_;
  return n;
}

NodeIndex ScenarioTree::ancestor(NodeIndex node, int level, int ancestor_level) const {
  if (ancestor_level > level) throw DomainError("scenario tree: ancestor level above node level");
  for (int t = level; t > ancestor_level; --t) node /= branching_;
  return node;
}

double conditional_expectation(std::span<const double> child_values, const ScenarioTree& tree) {
  if (child_values.size() != static_cast<std::size_t>(tree.branching()))
    throw ShapeError("conditional_expectation: expected one value per branch");
  double sum = 0.0;
  for (double v : child_values) sum += v;
  return sum * tree.branch_probability();
}

FieldRepresentation represent_children(const Eigen::Ref<const RowMatrix>& children, const ScenarioTree& tree,
                                       double tolerance) {
  const int branches = tree.branching();
  if (children.rows() != branches) throw ShapeError("represent_children: expected one row per branch");
  const int n = tree.brownian_count();
  const double p = tree.branch_probability();

  FieldRepresentation rep;
  rep.mean = children.colwise().sum().transpose() * p;
  rep.chi.assign(n, Eigen::VectorXd::Zero(children.cols()));
  if (!tree.is_collapsed()) {
    // Increments are orthogonal under the branch measure with E[dw_i^2] = dt.
    for (int b = 0; b < branches; ++b) {
      const auto dw = tree.increments(b);
      for (int i = 0; i < n; ++i) rep.chi[i] += (p * dw[i] / tree.dt()) * children.row(b).transpose();
    }
  }

  rep.scale = children.size() == 0 ? 0.0 : children.cwiseAbs().maxCoeff();
  for (int b = 0; b < branches; ++b) {
    Eigen::VectorXd fit = rep.mean;
    const auto dw = tree.increments(b);
    for (int i = 0; i < n; ++i) fit += dw[i] * rep.chi[i];
    rep.residual = std::max(rep.residual, (children.row(b).transpose() - fit).cwiseAbs().maxCoeff());
  }
  if (rep.residual > tolerance * std::max(1.0, rep.scale)) {
    std::ostringstream msg;
    msg << "martingale representation residual " << rep.residual
        << " exceeds tolerance; child values are not spanned by the Brownian increments";
    throw RepresentationError(msg.str());
  }
  return rep;
}

MartingaleRepresentation martingale_representation(std::span<const double> child_values, const ScenarioTree& tree,
                                                   double tolerance) {
  if (child_values.size() != static_cast<std::size_t>(tree.branching()))
    throw ShapeError("martingale_representation: expected one value per branch");
  RowMatrix block(tree.branching(), 1);
  for (std::size_t b = 0; b < child_values.size(); ++b) block(static_cast<Eigen::Index>(b), 0) = child_values[b];
  const FieldRepresentation rep = represent_children(block, tree, tolerance);

  MartingaleRepresentation out;
  out.mean = rep.mean(0);
  out.residual = rep.residual;
  for (const auto& c : rep.chi) out.chi.push_back(c(0));
  return out;
}

std::vector<NodeIndex> sample_path(const ScenarioTree& tree, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> branch(0, tree.branching() - 1);
  std::vector<NodeIndex> path{0};
  path.reserve(static_cast<std::size_t>(tree.steps()) + 1);
  for (int t = 0; t < tree.steps(); ++t) path.push_back(tree.child(path.back(), branch(rng)));
  return path;
}

}  // namespace bspde
