#include "bspde/bspde_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bspde/errors.hpp"

namespace bspde {

namespace {

void validate_inputs(const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs, int s,
                     const AdaptedField& Phi, const AdaptedField& phi) {
  if (s < 1 || s > tree.steps()) throw DomainError("solve_cauchy_backward: terminal level out of range");
  if (coeffs.brownian_count() != tree.brownian_count())
    throw ShapeError("solve_cauchy_backward: coefficient Brownian count differs from the tree");
  if (coeffs.b.empty() || coeffs.b.first_level() > 0 || coeffs.b.last_level() < s - 1)
    throw ShapeError("solve_cauchy_backward: coefficients do not cover levels 0..s-1");
  if (coeffs.b.grid_size() != grid.size()) throw ShapeError("solve_cauchy_backward: coefficient grid size mismatch");
  if (Phi.empty() || !Phi.has_level(s) || Phi.grid_size() != grid.size())
    throw ShapeError("solve_cauchy_backward: terminal data must be a grid field at level s");
  if (!phi.empty()) {
    if (phi.first_level() > 0 || phi.last_level() < s - 1 || phi.grid_size() != grid.size())
      throw ShapeError("solve_cauchy_backward: source must cover levels 0..s-1");
  }
}

bool any_beta(const CoefficientSet& coeffs) {
  for (const auto& beta : coeffs.beta)
    if (beta.max_abs() != 0.0) return true;
  return false;
}

}  // namespace

BSPDESolution solve_cauchy_backward(const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs, int s,
                                    const AdaptedField& Phi, const AdaptedField& phi, SolverOptions options) {
  validate_inputs(tree, grid, coeffs, s, Phi, phi);

  const bool deterministic =
      coeffs.deterministic() && Phi.is_deterministic() && (phi.empty() || phi.is_deterministic());
  if (deterministic && !tree.is_collapsed()) {
    BSPDESolution sol = solve_cauchy_backward(ScenarioTree::collapsed(tree.steps(), tree.brownian_count(),
                                                                      tree.horizon()),
                                              grid, coeffs, s, Phi, phi, options);
    return sol;
  }
  if (tree.is_collapsed() && !deterministic)
    throw RepresentationError("solve_cauchy_backward: random inputs cannot be solved on a collapsed tree");

  const int J = grid.size();
  const int N = tree.brownian_count();
  const int B = tree.branching();
  const double dt = tree.dt();
  const Measurability meas = tree.is_collapsed() ? Measurability::Deterministic : Measurability::Adapted;

  BSPDESolution sol;
  sol.terminal_level = s;
  sol.dt = dt;
  sol.h = grid.h();
  sol.diagnostics.deterministic_path = tree.is_collapsed();
  sol.diagnostics.min_dominance_margin = std::numeric_limits<double>::infinity();
  sol.diagnostics.explicit_coupling_warning = dt > grid.h() && any_beta(coeffs);

  sol.u = AdaptedField::zeros(tree, 0, s, J, meas);
  for (int i = 0; i < N; ++i) sol.chi.push_back(AdaptedField::zeros(tree, 0, s - 1, J, meas));

  if (Phi.is_deterministic()) {
    sol.u.level(s).rowwise() = Phi.level(s).row(0);
  } else {
    if (Phi.level(s).rows() != tree.nodes_at(s))
      throw ShapeError("solve_cauchy_backward: terminal data node count differs from the tree");
    sol.u.level(s) = Phi.level(s);
  }

  // dt (A u + phi + sum B chi) per level, reused by the path-identity check
  std::vector<RowMatrix> increments(static_cast<std::size_t>(s));

  for (int t = s - 1; t >= 0; --t) {
    const NodeIndex nodes = tree.nodes_at(t);
    RowMatrix& level_drift = increments[static_cast<std::size_t>(t)];
    level_drift.resize(nodes, J);
    const RowMatrix& next = sol.u.level(t + 1);

    for (NodeIndex n = 0; n < nodes; ++n) {
      const auto children = next.middleRows(n * B, B);
      const FieldRepresentation rep = represent_children(children, tree, options.representation_tol);

      const TridiagonalOperator a = assemble_A(coeffs, grid, t, n);
      Eigen::VectorXd forcing = Eigen::VectorXd::Zero(J);
      if (!phi.empty()) forcing = phi.at(t, n);
      for (int i = 0; i < N; ++i) forcing += assemble_B(coeffs, grid, i, t, n).apply(rep.chi[i]);

      const TridiagonalOperator k = implicit_system(a, dt);
      const double margin = k.dominance_margin();
      sol.diagnostics.min_dominance_margin = std::min(sol.diagnostics.min_dominance_margin, margin);
      if (margin < 0.0) sol.diagnostics.diagonally_dominant = false;

      const Eigen::VectorXd rhs = rep.mean + dt * forcing;
      const Eigen::VectorXd u = solve_tridiagonal(k, rhs);
      sol.u.at(t, n) = u;
      for (int i = 0; i < N; ++i) sol.chi[i].at(t, n) = rep.chi[i];

      const Eigen::VectorXd drift = dt * (a.apply(u) + forcing);
      level_drift.row(n) = drift.transpose();

      for (int c = 0; c < B; ++c) {
        Eigen::VectorXd r = u - children.row(c).transpose() - drift;
        const auto dw = tree.increments(c);
        for (int i = 0; i < N; ++i) r += dw[i] * rep.chi[i];
        sol.diagnostics.max_step_residual = std::max(sol.diagnostics.max_step_residual, r.cwiseAbs().maxCoeff());
      }
    }
  }

  // Forward accumulation of the integral identity along every path.
  const Eigen::VectorXd u0 = sol.u.at(0, 0);
  RowMatrix acc = RowMatrix::Zero(1, J);
  for (int t = 1; t <= s; ++t) {
    const NodeIndex nodes = tree.nodes_at(t);
    RowMatrix next_acc(nodes, J);
    for (NodeIndex n = 0; n < nodes; ++n) {
      const NodeIndex p = tree.parent(n);
      Eigen::VectorXd v = acc.row(p).transpose() + increments[static_cast<std::size_t>(t - 1)].row(p).transpose();
      const auto dw = tree.increments(tree.branch_of(n));
      for (int i = 0; i < N; ++i) v -= dw[i] * sol.chi[i].at(t - 1, p);
      next_acc.row(n) = v.transpose();
      const double r = (u0 - sol.u.at(t, n) - v).cwiseAbs().maxCoeff();
      sol.diagnostics.max_path_residual = std::max(sol.diagnostics.max_path_residual, r);
    }
    acc = std::move(next_acc);
  }
  return sol;
}

BSPDESolution operator_L(const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs, int s,
                         const AdaptedField& phi, SolverOptions options) {
  const AdaptedField zero = AdaptedField::deterministic_terminal(s, Eigen::VectorXd::Zero(grid.size()));
  return solve_cauchy_backward(tree, grid, coeffs, s, zero, phi, options);
}

BSPDESolution operator_Lambda(const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs, int s,
                              const AdaptedField& Phi, SolverOptions options) {
  return solve_cauchy_backward(tree, grid, coeffs, s, Phi, AdaptedField{}, options);
}

double integral_identity_residual(const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs,
                                  const AdaptedField& u, const std::vector<AdaptedField>& chi,
                                  const AdaptedField& phi, int s) {
  const int J = grid.size();
  const int N = tree.brownian_count();
  if (static_cast<int>(chi.size()) != N) throw ShapeError("integral_identity_residual: one chi per Brownian component");
  const Eigen::VectorXd u0 = u.at(0, 0);
  RowMatrix acc = RowMatrix::Zero(1, J);
  double worst = 0.0;
  for (int t = 1; t <= s; ++t) {
    const NodeIndex parents = tree.nodes_at(t - 1);
    RowMatrix drift(parents, J);
    for (NodeIndex p = 0; p < parents; ++p) {
      Eigen::VectorXd d = assemble_A(coeffs, grid, t - 1, p).apply(u.at(t - 1, p));
      if (!phi.empty()) d += phi.at(t - 1, p);
      for (int i = 0; i < N; ++i) d += assemble_B(coeffs, grid, i, t - 1, p).apply(chi[i].at(t - 1, p));
      drift.row(p) = tree.dt() * d.transpose();
    }
    const NodeIndex nodes = tree.nodes_at(t);
    RowMatrix next_acc(nodes, J);
    for (NodeIndex n = 0; n < nodes; ++n) {
      const NodeIndex p = tree.parent(n);
      Eigen::VectorXd v = acc.row(p).transpose() + drift.row(p).transpose();
      const auto dw = tree.increments(tree.branch_of(n));
      for (int i = 0; i < N; ++i) v -= dw[i] * chi[i].at(t - 1, p);
      next_acc.row(n) = v.transpose();
      worst = std::max(worst, (u0 - u.at(t, n) - v).cwiseAbs().maxCoeff());
    }
    acc = std::move(next_acc);
  }
  return worst;
}

double h1_seminorm_sq(const Eigen::Ref<const Eigen::VectorXd>& v, double h) {
  const Eigen::Index n = v.size();
  if (n == 0) return 0.0;
  double sum = v(0) * v(0) + v(n - 1) * v(n - 1);
  for (Eigen::Index j = 0; j + 1 < n; ++j) {
    const double d = v(j + 1) - v(j);
    sum += d * d;
  }
  return sum / h;
}

double NormReport::solution_total() const {
  double total = u_y1;
  for (double c : chi_x0) total += c;
  return total;
}

NormReport energy_norms(const BSPDESolution& sol, const AdaptedField& data_terminal, const AdaptedField& phi) {
  NormReport r;
  const int s = sol.terminal_level;
  const double h = sol.h;
  double x1 = 0.0;
  for (int t = 0; t <= s; ++t) {
    const double ms = sol.u.mean_square(t, h);
    r.u_sup = std::max(r.u_sup, std::sqrt(ms));
    if (t < s) {
      const RowMatrix& level = sol.u.level(t);
      double grad = 0.0;
      for (Eigen::Index n = 0; n < level.rows(); ++n) grad += h1_seminorm_sq(level.row(n).transpose(), h);
      grad /= static_cast<double>(level.rows());
      x1 += sol.dt * (ms + grad);
    }
  }
  r.u_x1 = std::sqrt(x1);
  r.u_y1 = r.u_sup + r.u_x1;

  for (const auto& chi : sol.chi) {
    double sum = 0.0;
    for (int t = 0; t < s; ++t) sum += sol.dt * chi.mean_square(t, h);
    r.chi_x0.push_back(std::sqrt(sum));
  }
  if (!phi.empty()) {
    double sum = 0.0;
    for (int t = 0; t < s; ++t) sum += sol.dt * phi.mean_square(t, h);
    r.phi_x0 = std::sqrt(sum);
  }
  if (!data_terminal.empty()) r.terminal_norm = std::sqrt(data_terminal.mean_square(data_terminal.last_level(), h));

  const double data = r.phi_x0 + r.terminal_norm;
  r.ratio = data > 0.0 ? r.solution_total() / data : 0.0;
  return r;
}

AdaptedField exponential_weight(const AdaptedField& field, double q, int s, double dt) {
  AdaptedField out = field;
  for (int t = out.first_level(); t <= out.last_level(); ++t) out.level(t) *= std::exp(q * (s - t) * dt);
  return out;
}

BSPDESolution exponential_weight_transform(const BSPDESolution& sol, double q) {
  BSPDESolution out = sol;
  out.u = exponential_weight(sol.u, q, sol.terminal_level, sol.dt);
  for (auto& chi : out.chi) chi = exponential_weight(chi, q, sol.terminal_level, sol.dt);
  return out;
}

}  // namespace bspde
