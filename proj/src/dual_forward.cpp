#include "bspde/dual_forward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bspde/bspde_solver.hpp"
#include "bspde/errors.hpp"
#include "bspde/nonlocal.hpp"

namespace bspde {

DualDensity solve_forward_dual(const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs, int s,
                               const Eigen::VectorXd& rho, DualOptions options) {
  const int M = tree.steps();
  const int J = grid.size();
  if (s < 0 || s >= M) throw DomainError("solve_forward_dual: start level out of range");
  if (rho.size() != J) throw ShapeError("solve_forward_dual: rho must be a grid field");
  if (coeffs.brownian_count() != tree.brownian_count())
    throw ShapeError("solve_forward_dual: coefficient Brownian count differs from the tree");

  if (coeffs.deterministic() && coeffs.noise_free() && !tree.is_collapsed())
    return solve_forward_dual(ScenarioTree::collapsed(M, tree.brownian_count(), tree.horizon()), grid, coeffs, s,
                              rho, options);
  if (tree.is_collapsed() && !coeffs.deterministic())
    throw RepresentationError("solve_forward_dual: random coefficients need the full tree");

  const int N = tree.brownian_count();
  const int B = tree.branching();
  const double dt = tree.dt();

  DualDensity d;
  d.rho = rho;
  d.start_level = s;
  d.p = AdaptedField::zeros(tree, s, M, J,
                            tree.is_collapsed() ? Measurability::Deterministic : Measurability::Adapted);
  d.p.level(s).rowwise() = rho.transpose();

  for (int t = s; t < M; ++t) {
    const NodeIndex nodes = tree.nodes_at(t);
    for (NodeIndex n = 0; n < nodes; ++n) {
      const TridiagonalOperator a = assemble_A(coeffs, grid, t, n);
      if (!a.off_diagonals_nonnegative()) d.monotone_scheme = false;
      const Eigen::VectorXd q = solve_tridiagonal(implicit_system(a, dt).transpose(), d.p.at(t, n));

      std::vector<TridiagonalOperator> b_star;
      for (int i = 0; i < N; ++i) b_star.push_back(assemble_B(coeffs, grid, i, t, n).transpose());
      std::vector<Eigen::VectorXd> bq;
      for (const auto& op : b_star) bq.push_back(op.apply(q));

      for (int c = 0; c < B; ++c) {
        const auto dw = tree.increments(c);
        Eigen::VectorXd next = q;
        TridiagonalOperator step = TridiagonalOperator::zero(J);
        step.diag.setOnes();
        for (int i = 0; i < N; ++i) {
          next += dw[i] * bq[i];
          step.lower += dw[i] * b_star[i].lower;
          step.diag += dw[i] * b_star[i].diag;
          step.upper += dw[i] * b_star[i].upper;
        }
        if (step.diag.minCoeff() < 0.0 || !step.off_diagonals_nonnegative()) d.monotone_scheme = false;
        d.p.at(t + 1, tree.child(n, c)) = next;
      }
    }
  }

  const double h = grid.h();
  double scale = 0.0;
  d.min_value = 0.0;
  for (int t = s; t <= M; ++t) {
    const RowMatrix& level = d.p.level(t);
    d.mass.push_back(h * level.sum() / static_cast<double>(level.rows()));
    d.min_value = std::min(d.min_value, level.minCoeff());
    scale = std::max(scale, level.cwiseAbs().maxCoeff());
  }
  if (rho.minCoeff() >= 0.0) d.positivity_ok = d.min_value >= -options.positivity_tol * std::max(1.0, scale);
  for (std::size_t k = 1; k < d.mass.size(); ++k)
    if (d.mass[k] > d.mass[k - 1] * (1.0 + 1e-12) + 1e-15) d.mass_non_increasing = false;
  return d;
}

double expected_pairing(const DualDensity& dual, const AdaptedField& Phi, double h) {
  const int M = dual.p.last_level();
  if (!Phi.has_level(M)) throw ShapeError("expected_pairing: Phi must live at the final level");
  const NodeIndex rows = std::max(dual.p.rows_at(M), Phi.rows_at(M));
  if (!dual.p.is_deterministic() && !Phi.is_deterministic() && dual.p.rows_at(M) != Phi.rows_at(M))
    throw ShapeError("expected_pairing: node counts differ");
  double sum = 0.0;
  for (NodeIndex l = 0; l < rows; ++l) sum += dual.p.at(M, l).dot(Phi.at(M, l));
  return h * sum / static_cast<double>(rows);
}

DualityReport duality_check(const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs, double kappa,
                            const Eigen::VectorXd& rho, const AdaptedField& Phi) {
  const int M = tree.steps();
  DualityReport r;
  const BSPDESolution back = operator_Lambda(tree, grid, coeffs, M, Phi);
  const AdaptedField q_phi = apply_gamma(NonlocalCondition::scaled_initial(kappa), back, tree);
  r.lhs = grid.inner(rho, q_phi.at(M, 0));

  const DualDensity dual = solve_forward_dual(tree, grid, coeffs, 0, rho);
  r.rhs = kappa * expected_pairing(dual, Phi, grid.h());
  r.gap = std::abs(r.lhs - r.rhs);
  return r;
}

MassReport mass_contraction_check(const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs,
                                  const Eigen::VectorXd& rho, double nu_star, double tol) {
  MassReport r;
  r.bound = nu_star;
  if (rho.size() != grid.size()) throw ShapeError("mass_contraction_check: rho must be a grid field");
  if (rho.minCoeff() < 0.0) throw DomainError("mass_contraction_check: rho must be non-negative");
  const double total = grid.h() * rho.sum();
  if (total == 0.0) {
    r.pass = true;
    return r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("mass_contraction_check: rho must integrate to 1");

  const DualDensity d = solve_forward_dual(tree, grid, coeffs, 0, rho);
  r.trajectory = d.mass;
  r.final_mass = d.mass.back();
  r.non_increasing = d.mass_non_increasing;
  r.positivity_ok = d.positivity_ok;
  r.pass = r.final_mass <= nu_star + tol;
  return r;
}

double nu1_bound(const CoefficientSet& coeffs, double horizon) {
  double c = std::numeric_limits<double>::infinity();
  for (int t = coeffs.killing.first_level(); t <= coeffs.killing.last_level(); ++t)
    c = std::min(c, coeffs.killing.level(t).minCoeff());
  return c > 0.0 ? std::exp(-c * horizon) : 1.0;
}

KappaReduction reduce_kappa(const CoefficientSet& coeffs, double kappa, double horizon) {
  if (!(std::abs(kappa) < 1.0) || kappa == 0.0) throw DomainError("reduce_kappa: needs 0 < |kappa| < 1");
  KappaReduction r;
  r.q = std::log(std::abs(kappa)) / horizon;
  r.sign = kappa > 0.0 ? 1.0 : -1.0;
  r.nu1 = std::abs(kappa);
  r.coeffs = shift_killing(coeffs, -r.q);
  return r;
}

}  // namespace bspde
