#include "bspde/nonlocal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "bspde/errors.hpp"
#include "bspde/parallel.hpp"

namespace bspde {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Eigen::VectorXd flatten_terminal(const AdaptedField& f, int level, NodeIndex leaves, int J) {
  Eigen::VectorXd v(leaves * J);
  for (NodeIndex l = 0; l < leaves; ++l) v.segment(l * J, J) = f.at(level, l);
  return v;
}

AdaptedField unflatten_terminal(const Eigen::VectorXd& v, const ScenarioTree& tree, int J) {
  const int M = tree.steps();
  AdaptedField f = AdaptedField::zeros(tree, M, M, J, Measurability::Adapted);
  for (NodeIndex l = 0; l < tree.leaf_count(); ++l) f.at(M, l) = v.segment(l * J, J);
  return f;
}

}  // namespace

std::vector<GammaTerm> gamma_terms(const NonlocalCondition& cond, const ScenarioTree& tree, int grid_size) {
  std::vector<GammaTerm> out;
  const int M = tree.steps();
  const double dt = tree.dt();
  const double T = tree.horizon();
  for (const auto& term : cond.terms) {
    std::visit(Overloaded{
                   [&](const ScaledInitial& s) {
                     if (!std::isfinite(s.kappa)) throw DomainError("scaled-initial condition: kappa is not finite");
                     out.push_back({0, cond.scale * s.kappa, {}, 0.0});
                   },
                   [&](const PointTimes& p) {
                     for (const auto& pt : p.points) {
                       if (!(pt.time >= 0.0 && pt.time < T)) {
                         std::ostringstream msg;
                         msg << "point-time condition: t = " << pt.time << " lies outside [0, T) with T = " << T;
                         throw DomainError(msg.str());
                       }
                       if (!std::isfinite(pt.weight)) throw DomainError("point-time condition: weight is not finite");
                       if (pt.kernel.size() != 0 &&
                           (pt.kernel.rows() != grid_size || pt.kernel.cols() != grid_size || !pt.kernel.allFinite()))
                         throw ShapeError("point-time condition: spatial kernel must be a finite J x J matrix");
                       const int level = std::clamp(static_cast<int>(std::lround(pt.time / dt)), 0, M - 1);
                       out.push_back({level, cond.scale * pt.weight, pt.kernel, std::abs(pt.time - level * dt)});
                     }
                   },
                   [&](const TimeKernel& k) {
                     if (!k.k0) throw DomainError("time-kernel condition: kernel function missing");
                     for (int r = 0; r < M; ++r) {
                       const double w = dt * k.k0(r * dt);
                       if (!std::isfinite(w)) throw DomainError("time-kernel condition: kernel is not finite");
                       if (w != 0.0) out.push_back({r, cond.scale * w, {}, 0.0});
                     }
                   },
               },
               term);
  }
  return out;
}

TargetSpace target_space(const NonlocalCondition& cond, const ScenarioTree& tree, int grid_size) {
  for (const auto& t : gamma_terms(cond, tree, grid_size))
    if (t.level != 0) return TargetSpace::Terminal;
  return TargetSpace::Initial;
}

double max_snap_distance(const NonlocalCondition& cond, const ScenarioTree& tree, int grid_size) {
  double d = 0.0;
  for (const auto& t : gamma_terms(cond, tree, grid_size)) d = std::max(d, t.snap_distance);
  return d;
}

AdaptedField apply_gamma(const NonlocalCondition& cond, const BSPDESolution& sol, const ScenarioTree& tree) {
  const int M = tree.steps();
  if (sol.terminal_level != M) throw DomainError("apply_gamma: the solution must run to the final level");
  const int J = sol.u.grid_size();
  const auto terms = gamma_terms(cond, tree, J);

  auto contribution = [&](const GammaTerm& term, NodeIndex node) -> Eigen::VectorXd {
    Eigen::VectorXd v = sol.u.at(term.level, node);
    if (term.kernel.size() != 0) v = term.kernel * v;
    return term.weight * v;
  };

  bool deterministic = sol.u.is_deterministic();
  if (!deterministic) {
    deterministic = true;
    for (const auto& t : terms)
      if (t.level != 0) deterministic = false;
  }
  if (deterministic) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(J);
    for (const auto& t : terms) v += contribution(t, 0);
    return AdaptedField::deterministic_terminal(M, v);
  }

  if (sol.u.rows_at(M) != tree.leaf_count()) throw ShapeError("apply_gamma: solution and tree have different shapes");
  AdaptedField out = AdaptedField::zeros(tree, M, M, J, Measurability::Adapted);
  RowMatrix& level = out.level(M);
  for (const auto& t : terms) {
    const NodeIndex nodes = tree.nodes_at(t.level);
    const NodeIndex span = tree.leaf_count() / nodes;
    for (NodeIndex a = 0; a < nodes; ++a) {
      const Eigen::RowVectorXd c = contribution(t, a).transpose();
      level.middleRows(a * span, span).rowwise() += c;
    }
  }
  return out;
}

bool reduction_applies(const NonlocalCondition& cond, const ScenarioTree& tree, const Grid& grid,
                       const CoefficientSet& coeffs, const AdaptedField& phi, const AdaptedField& xi) {
  if (!xi.empty() && !xi.is_deterministic()) return false;
  if (target_space(cond, tree, grid.size()) == TargetSpace::Initial) return true;
  return coeffs.deterministic() && (phi.empty() || phi.is_deterministic());
}

QOperator assemble_Q(const NonlocalCondition& cond, const ScenarioTree& tree, const Grid& grid,
                     const CoefficientSet& coeffs, bool reduced, const NonlocalOptions& options) {
  const int M = tree.steps();
  const int J = grid.size();
  const NodeIndex leaves = tree.leaf_count();
  const std::size_t dim = reduced ? static_cast<std::size_t>(J) : static_cast<std::size_t>(leaves * J);
  if (dim > options.dimension_budget) {
    std::ostringstream msg;
    msg << "assemble_Q: dimension " << dim << " exceeds the budget of " << options.dimension_budget
        << "; use an F_0-valued condition with the reduced path or fewer time steps";
    throw SizeError(msg.str());
  }
  if (reduced && !coeffs.deterministic() && target_space(cond, tree, J) != TargetSpace::Initial)
    throw DomainError("assemble_Q: the reduced path needs an F_0-valued condition or deterministic coefficients");

  QOperator q;
  q.reduced = reduced;
  q.grid_size = J;
  q.leaves = reduced ? 1 : leaves;
  q.matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  {
    std::ostringstream d;
    d << (reduced ? "reduced" : "full") << " Q, dim " << dim << ", M " << M << ", J " << J;
    q.description = d.str();
  }

  parallel_for(static_cast<std::int64_t>(dim), options.threads, [&](std::int64_t k) {
    AdaptedField basis;
    if (reduced) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(J);
      e(k) = 1.0;
      basis = AdaptedField::deterministic_terminal(M, e);
    } else {
      basis = AdaptedField::zeros(tree, M, M, J, Measurability::Adapted);
      basis.level(M)(k / J, k % J) = 1.0;
    }
    const BSPDESolution sol = operator_Lambda(tree, grid, coeffs, M, basis, options.solver);
    const AdaptedField g = apply_gamma(cond, sol, tree);
    if (reduced) {
      q.matrix.col(k) = g.at(M, 0);
    } else {
      q.matrix.col(k) = flatten_terminal(g, M, leaves, J);
    }
  });
  return q;
}

AdaptedField apply_T(const NonlocalCondition& cond, const ScenarioTree& tree, const Grid& grid,
                     const CoefficientSet& coeffs, const AdaptedField& phi, const NonlocalOptions& options) {
  const BSPDESolution sol = operator_L(tree, grid, coeffs, tree.steps(), phi, options.solver);
  return apply_gamma(cond, sol, tree);
}

double SpectrumReport::distance_to(std::complex<double> z) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& mu : eigenvalues) d = std::min(d, std::abs(mu - z));
  return d;
}

SpectrumReport spectrum(const QOperator& q, const NonlocalOptions& options) {
  if (q.dimension() > options.spectrum_budget) {
    std::ostringstream msg;
    msg << "spectrum: dimension " << q.dimension() << " exceeds the spectrum budget of " << options.spectrum_budget;
    throw SizeError(msg.str());
  }
  SpectrumReport r;
  if (q.dimension() == 0) return r;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(q.matrix, false);
  if (solver.info() != Eigen::Success) throw ConditionError("spectrum: eigenvalue iteration did not converge");
  const auto& ev = solver.eigenvalues();
  for (Eigen::Index k = 0; k < ev.size(); ++k) r.eigenvalues.push_back(ev(k));
  std::sort(r.eigenvalues.begin(), r.eigenvalues.end(),
            [](const auto& a, const auto& b) { return std::abs(a) > std::abs(b); });
  r.spectral_radius = std::abs(r.eigenvalues.front());
  r.distance_to_one = r.distance_to({1.0, 0.0});
  return r;
}

double condition_number(const Eigen::MatrixXd& m, std::size_t exact_budget) {
  if (m.rows() == 0) return 1.0;
  if (static_cast<std::size_t>(m.rows()) <= exact_budget) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    const double smin = s(s.size() - 1);
    return smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  const double rc = lu.rcond();
  return rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
}

namespace {

double estimate_spectral_radius(const QOperator& q, const NonlocalOptions& options) {
  if (q.dimension() <= options.spectrum_budget) return spectrum(q, options).spectral_radius;
  // power iteration on |Q^k x|^(1/k)
  Eigen::VectorXd x = Eigen::VectorXd::Ones(q.matrix.rows()).normalized();
  double log_growth = 0.0;
  constexpr int kSteps = 200;
  for (int k = 0; k < kSteps; ++k) {
    x = q.matrix * x;
    const double n = x.norm();
    if (n == 0.0) return 0.0;
    log_growth += std::log(n);
    x /= n;
  }
  return std::exp(log_growth / kSteps);
}

}  // namespace

NonlocalSolution solve_nonlocal(const NonlocalCondition& cond, const AdaptedField& phi, const AdaptedField& xi,
                                const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs,
                                SolveMethod method, const NonlocalOptions& options) {
  const bool reduced = reduction_applies(cond, tree, grid, coeffs, phi, xi);
  const QOperator q = assemble_Q(cond, tree, grid, coeffs, reduced, options);
  return solve_nonlocal(q, cond, phi, xi, tree, grid, coeffs, method, options);
}

NonlocalSolution solve_nonlocal(const QOperator& q, const NonlocalCondition& cond, const AdaptedField& phi,
                                const AdaptedField& xi, const ScenarioTree& tree, const Grid& grid,
                                const CoefficientSet& coeffs, SolveMethod method, const NonlocalOptions& options) {
  const int M = tree.steps();
  const int J = grid.size();
  const NodeIndex leaves = tree.leaf_count();
  if (!xi.empty() && (!xi.has_level(M) || xi.grid_size() != J))
    throw ShapeError("solve_nonlocal: xi must be a grid field at the final level");
  if (q.reduced && !reduction_applies(cond, tree, grid, coeffs, phi, xi))
    throw DomainError("solve_nonlocal: reduced Q supplied but the fixed point is not deterministic");
  if (q.grid_size != J) throw ShapeError("solve_nonlocal: Q was assembled on a different grid");

  NonlocalSolution out;
  out.reduced = q.reduced;
  out.snap_distance = max_snap_distance(cond, tree, J);

  // g = xi + T phi on the unknown's space
  Eigen::VectorXd g = Eigen::VectorXd::Zero(q.matrix.rows());
  AdaptedField t_phi;
  if (!phi.empty()) t_phi = apply_T(cond, tree, grid, coeffs, phi, options);
  if (q.reduced) {
    if (!xi.empty()) g += xi.at(M, 0);
    if (!t_phi.empty()) {
      if (!t_phi.is_deterministic()) throw DomainError("solve_nonlocal: T phi is random on the reduced path");
      g += t_phi.at(M, 0);
    }
  } else {
    if (!xi.empty()) g += flatten_terminal(xi, M, leaves, J);
    if (!t_phi.empty()) g += flatten_terminal(t_phi, M, leaves, J);
  }

  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(q.matrix.rows(), q.matrix.cols()) - q.matrix;
  out.condition_number = condition_number(system, options.spectrum_budget);

  Eigen::VectorXd psi;
  if (method == SolveMethod::Direct) {
    if (!(out.condition_number <= options.fredholm_condition_max)) {
      double nearest = std::numeric_limits<double>::quiet_NaN();
      if (q.dimension() <= options.spectrum_budget) nearest = spectrum(q, options).distance_to_one;
      std::ostringstream msg;
      msg << "solve_nonlocal: I - Q is numerically singular (condition number " << out.condition_number
          << ", nearest eigenvalue of Q at distance " << nearest
          << " from 1); the homogeneous problem has a non-zero solution";
      throw FredholmError(msg.str(), out.condition_number, nearest);
    }
    psi = system.partialPivLu().solve(g);
  } else {
    out.spectral_radius = estimate_spectral_radius(q, options);
    if (!(out.spectral_radius < 1.0)) {
      std::ostringstream msg;
      msg << "solve_nonlocal: spectral radius " << out.spectral_radius
          << " >= 1, the Neumann series diverges; use the direct method";
      throw MethodError(msg.str());
    }
    psi = g;
    double first_delta = -1.0;
    double prev_delta = std::numeric_limits<double>::infinity();
    int growth = 0;
    bool converged = false;
    for (int k = 1; k <= options.max_iterations; ++k) {
      Eigen::VectorXd next = g + q.matrix * psi;
      const double delta = (next - psi).cwiseAbs().maxCoeff();
      psi = std::move(next);
      out.iterations = k;
      if (first_delta < 0.0) first_delta = delta;
      if (std::isfinite(prev_delta) && prev_delta > 0.0) out.contraction_factor = delta / prev_delta;
      const double scale = std::max(1.0, psi.cwiseAbs().maxCoeff());
      if (delta <= options.neumann_tol * scale) {
        converged = true;
        if (first_delta > 0.0 && out.spectral_radius > 0.0)
          out.predicted_iterations =
              1.0 + std::log(options.neumann_tol * scale / first_delta) / std::log(out.spectral_radius);
        break;
      }
      growth = delta > prev_delta ? growth + 1 : 0;
      if (growth > 50 || !std::isfinite(delta))
        throw MethodError("solve_nonlocal: Neumann iteration diverges; use the direct method");
      prev_delta = delta;
    }
    if (!converged) throw MethodError("solve_nonlocal: Neumann iteration did not converge; use the direct method");
  }

  out.terminal = q.reduced ? AdaptedField::deterministic_terminal(M, psi) : unflatten_terminal(psi, tree, J);
  out.solution = solve_cauchy_backward(tree, grid, coeffs, M, out.terminal, phi, options.solver);
  out.integral_residual = out.solution.diagnostics.max_path_residual;

  const AdaptedField gamma = apply_gamma(cond, out.solution, tree);
  NodeIndex rows = std::max(out.solution.u.rows_at(M), gamma.rows_at(M));
  if (!xi.empty()) rows = std::max(rows, xi.rows_at(M));
  for (NodeIndex l = 0; l < rows; ++l) {
    Eigen::VectorXd r = out.solution.u.at(M, l) - gamma.at(M, l);
    if (!xi.empty()) r -= xi.at(M, l);
    out.boundary_residual = std::max(out.boundary_residual, r.cwiseAbs().maxCoeff());
  }
  return out;
}

std::vector<EpsilonRow> sweep_epsilon(const NonlocalCondition& cond, const std::vector<double>& eps_grid,
                                      const AdaptedField& phi, const AdaptedField& xi, const ScenarioTree& tree,
                                      const Grid& grid, const CoefficientSet& coeffs, const SweepOptions& options) {
  const bool reduced = reduction_applies(cond, tree, grid, coeffs, phi, xi);
  const QOperator base = assemble_Q(cond, tree, grid, coeffs, reduced, options.nonlocal);
  const SpectrumReport spec = spectrum(base, options.nonlocal);
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(base.matrix.rows(), base.matrix.cols());

  std::vector<EpsilonRow> rows;
  for (double eps : eps_grid) {
    EpsilonRow row;
    row.eps = eps;
    const double factor = 1.0 + eps;
    QOperator q = base;
    q.matrix *= factor;
    row.spectral_distance =
        factor == 0.0 ? std::numeric_limits<double>::infinity() : spec.distance_to({1.0 / factor, 0.0});
    row.condition_number = condition_number(identity - q.matrix, options.nonlocal.spectrum_budget);
    row.near_singular = !(row.condition_number <= options.nonlocal.fredholm_condition_max);
    row.flagged = row.spectral_distance <= options.flag_tol;
    if (!row.flagged) {
      row.solved = true;
      try {
        const NonlocalSolution sol =
            solve_nonlocal(q, cond.scaled(factor), phi, xi, tree, grid, coeffs, SolveMethod::Direct, options.nonlocal);
        row.solvable = true;
        row.boundary_residual = sol.boundary_residual;
      } catch (const FredholmError&) {
        row.solvable = false;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace bspde
