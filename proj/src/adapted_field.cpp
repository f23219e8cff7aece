#include "bspde/adapted_field.hpp"

#include <algorithm>

#include "bspde/errors.hpp"

namespace bspde {

AdaptedField AdaptedField::zeros(const ScenarioTree& tree, int first_level, int last_level, int grid_size,
                                 Measurability measurability) {
  if (first_level < 0 || last_level < first_level || last_level > tree.steps())
    throw DomainError("adapted field: invalid level range");
  AdaptedField f;
  f.first_level_ = first_level;
  f.grid_size_ = grid_size;
  f.measurability_ = measurability;
  for (int t = first_level; t <= last_level; ++t) {
    const NodeIndex rows = measurability == Measurability::Deterministic ? 1 : tree.nodes_at(t);
    f.levels_.push_back(RowMatrix::Zero(rows, grid_size));
  }
  return f;
}

AdaptedField AdaptedField::constant_profile(int first_level, int last_level, const Eigen::VectorXd& profile) {
  if (first_level < 0 || last_level < first_level) throw DomainError("adapted field: invalid level range");
  AdaptedField f;
  f.first_level_ = first_level;
  f.grid_size_ = static_cast<int>(profile.size());
  f.measurability_ = Measurability::Deterministic;
  for (int t = first_level; t <= last_level; ++t) f.levels_.push_back(profile.transpose());
  return f;
}

AdaptedField AdaptedField::deterministic_terminal(int level, const Eigen::VectorXd& profile) {
  return constant_profile(level, level, profile);
}

AdaptedField AdaptedField::expanded(const ScenarioTree& tree) const {
  AdaptedField out = zeros(tree, first_level(), last_level(), grid_size_, Measurability::Adapted);
  for (int t = first_level(); t <= last_level(); ++t) {
    RowMatrix& dst = out.level(t);
    if (is_deterministic()) {
      dst.rowwise() = level(t).row(0);
    } else {
      if (level(t).rows() != dst.rows()) throw ShapeError("adapted field: node count does not match the tree");
      dst = level(t);
    }
  }
  return out;
}

double AdaptedField::mean_square(int level_index, double h) const {
  const RowMatrix& m = level(level_index);
  return h * m.squaredNorm() / static_cast<double>(m.rows());
}

double AdaptedField::max_abs() const {
  double v = 0.0;
  for (const auto& m : levels_)
    if (m.size() > 0) v = std::max(v, m.cwiseAbs().maxCoeff());
  return v;
}

AdaptedField& AdaptedField::operator*=(double s) {
  for (auto& m : levels_) m *= s;
  return *this;
}

AdaptedField& AdaptedField::operator+=(const AdaptedField& other) {
  if (other.first_level_ != first_level_ || other.levels_.size() != levels_.size() ||
      other.grid_size_ != grid_size_)
    throw ShapeError("adapted field: level ranges differ");
  if (is_deterministic() && !other.is_deterministic()) {
    for (std::size_t k = 0; k < levels_.size(); ++k) {
      RowMatrix expanded = other.levels_[k];
      expanded.rowwise() += levels_[k].row(0);
      levels_[k] = std::move(expanded);
    }
    measurability_ = Measurability::Adapted;
    return *this;
  }
  for (std::size_t k = 0; k < levels_.size(); ++k) {
    if (other.is_deterministic()) {
      levels_[k].rowwise() += other.levels_[k].row(0);
    } else {
      if (other.levels_[k].rows() != levels_[k].rows()) throw ShapeError("adapted field: node counts differ");
      levels_[k] += other.levels_[k];
    }
  }
  return *this;
}

AdaptedField operator*(double s, AdaptedField field) {
  field *= s;
  return field;
}

AdaptedField operator+(AdaptedField a, const AdaptedField& b) {
  a += b;
  return a;
}

AdaptedField hadamard(const AdaptedField& a, const AdaptedField& b) {
  if (a.first_level() != b.first_level() || a.last_level() != b.last_level() || a.grid_size() != b.grid_size())
    throw ShapeError("adapted field: level ranges differ");
  const AdaptedField& wide = a.is_deterministic() ? b : a;
  const AdaptedField& other = a.is_deterministic() ? a : b;
  AdaptedField out = wide;
  for (int t = out.first_level(); t <= out.last_level(); ++t) {
    RowMatrix& m = out.level(t);
    const RowMatrix& o = other.level(t);
    if (other.is_deterministic()) {
      m.array().rowwise() *= o.row(0).array();
    } else {
      if (o.rows() != m.rows()) throw ShapeError("adapted field: node counts differ");
      m.array() *= o.array();
    }
  }
  return out;
}

}  // namespace bspde
