#include "bspde/spatial_disc.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "bspde/errors.hpp"

namespace bspde {

Grid::Grid(double x_min, double x_max, int interior_points) : x_min_(x_min), x_max_(x_max), size_(interior_points) {
  if (interior_points < 3) throw DomainError("grid: at least 3 interior points are required");
  if (!(x_max > x_min)) throw DomainError("grid: x_max must exceed x_min");
}

Eigen::VectorXd Grid::points() const {
  Eigen::VectorXd p(size_);
  for (int j = 0; j < size_; ++j) p(j) = x(j);
  return p;
}

Eigen::VectorXd Grid::sample(const std::function<double(double)>& f) const {
  Eigen::VectorXd v(size_);
  for (int j = 0; j < size_; ++j) v(j) = f(x(j));
  return v;
}

CoefficientFn CoefficientFn::constant(double value) {
  return {[value](const PointContext&) { return value; }, false};
}

CoefficientFn CoefficientFn::profile(std::function<double(double, double)> f) {
  return {[f = std::move(f)](const PointContext& c) { return f(c.x, c.t); }, false};
}

CoefficientFn CoefficientFn::random(std::function<double(const PointContext&)> f) {
  return {std::move(f), true};
}

bool CoefficientModel::deterministic() const {
  if (b.node_dependent || drift.node_dependent || killing.node_dependent) return false;
  for (const auto& f : beta)
    if (f.node_dependent) return false;
  for (const auto& f : beta_bar)
    if (f.node_dependent) return false;
  return true;
}

bool CoefficientSet::deterministic() const {
  if (!b.is_deterministic() || !drift.is_deterministic() || !killing.is_deterministic()) return false;
  for (const auto& f : beta)
    if (!f.is_deterministic()) return false;
  for (const auto& f : beta_bar)
    if (!f.is_deterministic()) return false;
  return true;
}

bool CoefficientSet::noise_free() const {
  for (const auto& f : beta)
    if (f.max_abs() != 0.0) return false;
  for (const auto& f : beta_bar)
    if (f.max_abs() != 0.0) return false;
  return true;
}

namespace {

AdaptedField sample_field(const CoefficientFn& fn, const ScenarioTree& tree, const Grid& grid) {
  const Measurability m = (fn.node_dependent && !tree.is_collapsed()) ? Measurability::Adapted
                                                                      : Measurability::Deterministic;
  AdaptedField field = AdaptedField::zeros(tree, 0, tree.steps(), grid.size(), m);
  for (int t = 0; t <= tree.steps(); ++t) {
    RowMatrix& level = field.level(t);
    for (NodeIndex n = 0; n < level.rows(); ++n) {
      for (int j = 0; j < grid.size(); ++j) level(n, j) = fn({grid.x(j), tree.time(t), t, n});
    }
  }
  return field;
}

void require_finite(const AdaptedField& f, const char* name) {
  for (int t = f.first_level(); t <= f.last_level(); ++t) {
    if (!f.level(t).allFinite()) {
      std::ostringstream msg;
      msg << "coefficients: " << name << " is not finite at level " << t;
      throw ConditionError(msg.str());
    }
  }
}

}  // namespace

CoefficientSet discretize(const CoefficientModel& model, const ScenarioTree& tree, const Grid& grid) {
  if (model.beta.size() != model.beta_bar.size())
    throw ShapeError("coefficients: beta and beta_bar must have one entry per Brownian component");
  if (model.brownian_count() != tree.brownian_count())
    throw ShapeError("coefficients: Brownian count differs from the scenario tree");
  CoefficientSet set;
  set.form = model.form;
  set.b = sample_field(model.b, tree, grid);
  set.drift = sample_field(model.drift, tree, grid);
  set.killing = sample_field(model.killing, tree, grid);
  for (const auto& f : model.beta) set.beta.push_back(sample_field(f, tree, grid));
  for (const auto& f : model.beta_bar) set.beta_bar.push_back(sample_field(f, tree, grid));

  require_finite(set.b, "b");
  require_finite(set.drift, "drift");
  require_finite(set.killing, "lambda");
  for (const auto& f : set.beta) require_finite(f, "beta");
  for (const auto& f : set.beta_bar) require_finite(f, "beta_bar");
  return set;
}

CoefficientSet shift_killing(CoefficientSet coeffs, double shift) {
  for (int t = coeffs.killing.first_level(); t <= coeffs.killing.last_level(); ++t)
    coeffs.killing.level(t).array() += shift;
  return coeffs;
}

Eigen::VectorXd centered_derivative(const Eigen::Ref<const Eigen::VectorXd>& v, double h) {
  const Eigen::Index n = v.size();
  if (n < 3) throw ShapeError("centered_derivative: need at least 3 samples");
  Eigen::VectorXd d(n);
  d(0) = (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * h);
  for (Eigen::Index j = 1; j + 1 < n; ++j) d(j) = (v(j + 1) - v(j - 1)) / (2.0 * h);
  d(n - 1) = (3.0 * v(n - 1) - 4.0 * v(n - 2) + v(n - 3)) / (2.0 * h);
  return d;
}

CoefficientSet to_nondivergence(const CoefficientSet& coeffs, const Grid& grid) {
  if (coeffs.form == OperatorForm::NonDivergence) return coeffs;
  CoefficientSet out = coeffs;
  out.form = OperatorForm::NonDivergence;
  // the drift picks up node dependence from b
  if (!coeffs.b.is_deterministic() && coeffs.drift.is_deterministic()) out.drift += 0.0 * coeffs.b;
  for (int t = coeffs.b.first_level(); t <= coeffs.b.last_level(); ++t) {
    const RowMatrix& b = coeffs.b.level(t);
    RowMatrix& f = out.drift.level(t);
    for (NodeIndex n = 0; n < f.rows(); ++n) {
      const Eigen::VectorXd bn = b.row(coeffs.b.is_deterministic() ? 0 : n).transpose();
      f.row(n) += centered_derivative(bn, grid.h()).transpose();
    }
  }
  return out;
}

AdaptedField tilde_drift(const CoefficientSet& coeffs) {
  if (coeffs.form != OperatorForm::NonDivergence)
    throw ConditionError("tilde_drift: coefficients must be in non-divergence form");
  AdaptedField out = coeffs.drift;
  for (int i = 0; i < coeffs.brownian_count(); ++i) {
    const AdaptedField product = hadamard(coeffs.beta[i], coeffs.beta_bar[i]);
    out += -1.0 * product;
  }
  return out;
}

AdaptedField tilde_beta(const CoefficientSet& coeffs) {
  AdaptedField out = 2.0 * coeffs.b;
  for (const auto& beta : coeffs.beta) {
    out += -1.0 * hadamard(beta, beta);
  }
  for (int t = out.first_level(); t <= out.last_level(); ++t) {
    RowMatrix& m = out.level(t);
    if (m.size() > 0 && m.minCoeff() <= 0.0) {
      std::ostringstream msg;
      msg << "tilde_beta: 2b - sum beta_i^2 = " << m.minCoeff() << " at level " << t
          << "; the residual diffusion needs 2b > sum beta_i^2 strictly";
      throw ConditionError(msg.str());
    }
    m = m.cwiseSqrt();
  }
  return out;
}

TridiagonalOperator TridiagonalOperator::zero(int size) {
  TridiagonalOperator op;
  op.lower = Eigen::VectorXd::Zero(size);
  op.diag = Eigen::VectorXd::Zero(size);
  op.upper = Eigen::VectorXd::Zero(size);
  return op;
}

Eigen::VectorXd TridiagonalOperator::apply(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  const int n = size();
  if (v.size() != n) throw ShapeError("tridiagonal apply: size mismatch");
  Eigen::VectorXd out = diag.cwiseProduct(v);
  for (int j = 1; j < n; ++j) out(j) += lower(j) * v(j - 1);
  for (int j = 0; j + 1 < n; ++j) out(j) += upper(j) * v(j + 1);
  return out;
}

TridiagonalOperator TridiagonalOperator::transpose() const {
  const int n = size();
  TridiagonalOperator t = zero(n);
  t.level = level;
  t.node = node;
  t.diag = diag;
  for (int j = 1; j < n; ++j) t.lower(j) = upper(j - 1);
  for (int j = 0; j + 1 < n; ++j) t.upper(j) = lower(j + 1);
  return t;
}

Eigen::MatrixXd TridiagonalOperator::dense() const {
  const int n = size();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    m(j, j) = diag(j);
    if (j > 0) m(j, j - 1) = lower(j);
    if (j + 1 < n) m(j, j + 1) = upper(j);
  }
  return m;
}

double TridiagonalOperator::dominance_margin() const {
  const int n = size();
  double margin = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    const double off = (j > 0 ? std::abs(lower(j)) : 0.0) + (j + 1 < n ? std::abs(upper(j)) : 0.0);
    margin = std::min(margin, std::abs(diag(j)) - off);
  }
  return margin;
}

bool TridiagonalOperator::off_diagonals_nonnegative() const {
  const int n = size();
  for (int j = 1; j < n; ++j)
    if (lower(j) < 0.0) return false;
  for (int j = 0; j + 1 < n; ++j)
    if (upper(j) < 0.0) return false;
  return true;
}

Eigen::VectorXd solve_tridiagonal(const TridiagonalOperator& m, const Eigen::Ref<const Eigen::VectorXd>& rhs) {
  const int n = m.size();
  if (rhs.size() != n) throw ShapeError("solve_tridiagonal: size mismatch");
  Eigen::VectorXd c(n);
  Eigen::VectorXd d(n);
  double pivot = m.diag(0);
  if (pivot == 0.0) throw ConditionError("solve_tridiagonal: zero pivot in row 0");
  c(0) = m.upper(0) / pivot;
  d(0) = rhs(0) / pivot;
  for (int j = 1; j < n; ++j) {
    pivot = m.diag(j) - m.lower(j) * c(j - 1);
    if (pivot == 0.0 || !std::isfinite(pivot)) {
      std::ostringstream msg;
      msg << "solve_tridiagonal: zero pivot in row " << j << " (level " << m.level << ", node " << m.node << ")";
      throw ConditionError(msg.str());
    }
    c(j) = j + 1 < n ? m.upper(j) / pivot : 0.0;
    d(j) = (rhs(j) - m.lower(j) * d(j - 1)) / pivot;
  }
  Eigen::VectorXd x(n);
  x(n - 1) = d(n - 1);
  for (int j = n - 2; j >= 0; --j) x(j) = d(j) - c(j) * x(j + 1);
  return x;
}

TridiagonalOperator implicit_system(const TridiagonalOperator& a, double dt) {
  TridiagonalOperator k = a;
  k.lower *= -dt;
  k.upper *= -dt;
  k.diag = Eigen::VectorXd::Ones(a.size()) - dt * a.diag;
  return k;
}

namespace {

double value(const AdaptedField& f, int level, NodeIndex node, int j) { return f.at(level, node)(j); }

void require_coercive(const CoefficientSet& coeffs, const Grid& grid, int level, NodeIndex node) {
  const CoercivityReport r = check_coercivity(coeffs, grid, level, node);
  if (!r.pass) {
    std::ostringstream msg;
    msg << "coercivity violated: b - 1/2 sum beta^2 = " << r.delta << " at x = " << r.worst_x << ", level "
        << r.worst_level << ", node " << r.worst_node;
    throw ConditionError(msg.str());
  }
}

}  // namespace

TridiagonalOperator assemble_A(const CoefficientSet& coeffs, const Grid& grid, int level, NodeIndex node) {
  require_coercive(coeffs, grid, level, node);
  const int n = grid.size();
  const double h = grid.h();
  const double h2 = h * h;
  TridiagonalOperator a = TridiagonalOperator::zero(n);
  a.level = level;
  a.node = node;
  const auto b = coeffs.b.at(level, node);
  const auto f = coeffs.drift.at(level, node);
  const auto lam = coeffs.killing.at(level, node);

  if (coeffs.form == OperatorForm::Divergence) {
    for (int j = 0; j < n; ++j) {
      const double left = j > 0 ? 0.5 * (b(j - 1) + b(j)) : b(j);
      const double right = j + 1 < n ? 0.5 * (b(j) + b(j + 1)) : b(j);
      a.lower(j) = left / h2 - f(j) / (2.0 * h);
      a.diag(j) = -(left + right) / h2 - lam(j);
      a.upper(j) = right / h2 + f(j) / (2.0 * h);
    }
  } else {
    for (int j = 0; j < n; ++j) {
      a.lower(j) = b(j) / h2 - f(j) / (2.0 * h);
      a.diag(j) = -2.0 * b(j) / h2 - lam(j);
      a.upper(j) = b(j) / h2 + f(j) / (2.0 * h);
    }
  }
  a.lower(0) = 0.0;
  a.upper(n - 1) = 0.0;
  return a;
}

TridiagonalOperator assemble_B(const CoefficientSet& coeffs, const Grid& grid, int index, int level, NodeIndex node) {
  if (index < 0 || index >= coeffs.brownian_count()) throw DomainError("assemble_B: Brownian index out of range");
  const int n = grid.size();
  const double h = grid.h();
  TridiagonalOperator op = TridiagonalOperator::zero(n);
  op.level = level;
  op.node = node;
  const auto beta = coeffs.beta[index].at(level, node);
  const auto beta_bar = coeffs.beta_bar[index].at(level, node);
  for (int j = 0; j < n; ++j) {
    op.lower(j) = -beta(j) / (2.0 * h);
    op.diag(j) = beta_bar(j);
    op.upper(j) = beta(j) / (2.0 * h);
  }
  op.lower(0) = 0.0;
  op.upper(n - 1) = 0.0;
  return op;
}

TridiagonalOperator assemble_A_star(const CoefficientSet& coeffs, const Grid& grid, int level, NodeIndex node) {
  return assemble_A(coeffs, grid, level, node).transpose();
}

TridiagonalOperator assemble_B_star(const CoefficientSet& coeffs, const Grid& grid, int index, int level,
                                    NodeIndex node) {
  return assemble_B(coeffs, grid, index, level, node).transpose();
}

TridiagonalOperator analytic_A_star(const CoefficientSet& coeffs, const Grid& grid, int level, NodeIndex node) {
  if (coeffs.form != OperatorForm::NonDivergence)
    throw ConditionError("analytic_A_star: coefficients must be in non-divergence form");
  const int n = grid.size();
  const double h = grid.h();
  const double h2 = h * h;
  TridiagonalOperator a = TridiagonalOperator::zero(n);
  a.level = level;
  a.node = node;
  for (int j = 0; j < n; ++j) {
    // (b v)'' - (f v)' - lambda v with centred differences of the products
    if (j > 0)
      a.lower(j) = value(coeffs.b, level, node, j - 1) / h2 + value(coeffs.drift, level, node, j - 1) / (2.0 * h);
    a.diag(j) = -2.0 * value(coeffs.b, level, node, j) / h2 - value(coeffs.killing, level, node, j);
    if (j + 1 < n)
      a.upper(j) = value(coeffs.b, level, node, j + 1) / h2 - value(coeffs.drift, level, node, j + 1) / (2.0 * h);
  }
  return a;
}

TridiagonalOperator analytic_B_star(const CoefficientSet& coeffs, const Grid& grid, int index, int level,
                                    NodeIndex node) {
  if (index < 0 || index >= coeffs.brownian_count()) throw DomainError("analytic_B_star: Brownian index out of range");
  const int n = grid.size();
  const double h = grid.h();
  TridiagonalOperator op = TridiagonalOperator::zero(n);
  op.level = level;
  op.node = node;
  for (int j = 0; j < n; ++j) {
    if (j > 0) op.lower(j) = value(coeffs.beta[index], level, node, j - 1) / (2.0 * h);
    op.diag(j) = value(coeffs.beta_bar[index], level, node, j);
    if (j + 1 < n) op.upper(j) = -value(coeffs.beta[index], level, node, j + 1) / (2.0 * h);
  }
  return op;
}

CoercivityReport check_coercivity(const CoefficientSet& coeffs, const Grid& grid, int level, NodeIndex node) {
  CoercivityReport r;
  r.delta = std::numeric_limits<double>::infinity();
  const auto b = coeffs.b.at(level, node);
  for (int j = 0; j < grid.size(); ++j) {
    double d = b(j);
    for (const auto& beta : coeffs.beta) {
      const double v = beta.at(level, node)(j);
      d -= 0.5 * v * v;
    }
    if (d < r.delta) {
      r.delta = d;
      r.worst_x = grid.x(j);
      r.worst_level = level;
      r.worst_node = node;
    }
  }
  r.pass = r.delta > 0.0;
  return r;
}

CoercivityReport check_coercivity(const CoefficientSet& coeffs, const Grid& grid) {
  CoercivityReport worst;
  worst.delta = std::numeric_limits<double>::infinity();
  for (int t = coeffs.b.first_level(); t <= coeffs.b.last_level(); ++t) {
    NodeIndex rows = coeffs.b.rows_at(t);
    for (const auto& beta : coeffs.beta) rows = std::max(rows, beta.rows_at(t));
    for (NodeIndex n = 0; n < rows; ++n) {
      const CoercivityReport r = check_coercivity(coeffs, grid, t, n);
      if (r.delta < worst.delta) worst = r;
    }
  }
  worst.pass = worst.delta > 0.0;
  return worst;
}

bool beta_vanishes_at_boundary(const CoefficientModel& model, const ScenarioTree& tree, const Grid& grid, double tol) {
  for (const auto& beta : model.beta) {
    for (int t = 0; t <= tree.steps(); ++t) {
      const NodeIndex nodes = beta.node_dependent ? tree.nodes_at(t) : 1;
      for (NodeIndex n = 0; n < nodes; ++n) {
        if (std::abs(beta({grid.x_min(), tree.time(t), t, n})) > tol) return false;
        if (std::abs(beta({grid.x_max(), tree.time(t), t, n})) > tol) return false;
      }
    }
  }
  return true;
}

}  // namespace bspde
