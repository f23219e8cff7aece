#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "bspde/bspde_solver.hpp"

namespace bspde {

/// Gamma u = kappa u(., 0)
struct ScaledInitial {
  double kappa = 1.0;
};

struct PointTime {
  double time = 0.0;
  double weight = 1.0;
  /// Optional J x J spatial kernel applied after the weight; empty means identity.
  Eigen::MatrixXd kernel;
};

/// Gamma u = sum_i k_i u(., t_i)
struct PointTimes {
  std::vector<PointTime> points;
};

/// Gamma u = sum_{t < T} dt k0(t) u(., t)  (left rectangle rule over the levels)
struct TimeKernel {
  std::function<double(double)> k0;
};

using ConditionTerm = std::variant<ScaledInitial, PointTimes, TimeKernel>;

enum class TargetSpace {
  /// Gamma u is F_0-measurable (deterministic on the tree)
  Initial,
  /// Gamma u is F_T-measurable
  Terminal,
};

/// Linear map Gamma from trajectories to terminal fields; several terms form a mixture.
struct NonlocalCondition {
  std::vector<ConditionTerm> terms;
  /// overall factor, (1 + eps) in perturbation sweeps
  double scale = 1.0;

  static NonlocalCondition scaled_initial(double kappa) { return {{ScaledInitial{kappa}}, 1.0}; }
  NonlocalCondition scaled(double factor) const {
    NonlocalCondition c = *this;
    c.scale *= factor;
    return c;
  }
};

/// One level's contribution after snapping condition times to tree levels.
struct GammaTerm {
  int level = 0;
  double weight = 0.0;
  Eigen::MatrixXd kernel;
  double snap_distance = 0.0;
};

/// Resolves the condition into per-level terms. Point times are snapped to the
/// nearest level in [0, M-1]; a time outside [0, T) raises DomainError.
std::vector<GammaTerm> gamma_terms(const NonlocalCondition& cond, const ScenarioTree& tree, int grid_size);
TargetSpace target_space(const NonlocalCondition& cond, const ScenarioTree& tree, int grid_size);
double max_snap_distance(const NonlocalCondition& cond, const ScenarioTree& tree, int grid_size);

/// Gamma applied to the trajectory of `sol` (terminal level M). The result is a
/// field at level M, deterministic whenever it cannot depend on the node.
AdaptedField apply_gamma(const NonlocalCondition& cond, const BSPDESolution& sol, const ScenarioTree& tree);

struct NonlocalOptions {
  /// largest dimension of a dense Q (leaves * J on the full path)
  std::size_t dimension_budget = 4096;
  /// largest dimension for which eigenvalues are computed
  std::size_t spectrum_budget = 1024;
  double fredholm_condition_max = 1e12;
  double neumann_tol = 1e-14;
  int max_iterations = 100000;
  int threads = 1;
  SolverOptions solver;
};

/// Dense Q = Gamma Lambda_T on the discrete terminal space.
struct QOperator {
  Eigen::MatrixXd matrix;
  /// J x J restriction to deterministic terminal fields
  bool reduced = false;
  int grid_size = 0;
  NodeIndex leaves = 1;
  std::string description;

  std::size_t dimension() const { return static_cast<std::size_t>(matrix.rows()); }
};

/// Whether the fixed-point unknown u(., T) = Gamma u + xi is deterministic.
bool reduction_applies(const NonlocalCondition& cond, const ScenarioTree& tree, const Grid& grid,
                       const CoefficientSet& coeffs, const AdaptedField& phi, const AdaptedField& xi);

/// Column j is Gamma(Lambda_T e_j). With `reduced` the basis is the J
/// deterministic unit fields; otherwise one unit field per (leaf, grid point).
QOperator assemble_Q(const NonlocalCondition& cond, const ScenarioTree& tree, const Grid& grid,
                     const CoefficientSet& coeffs, bool reduced, const NonlocalOptions& options = {});

/// T phi = Gamma L_T phi.
AdaptedField apply_T(const NonlocalCondition& cond, const ScenarioTree& tree, const Grid& grid,
                     const CoefficientSet& coeffs, const AdaptedField& phi, const NonlocalOptions& options = {});

struct SpectrumReport {
  std::vector<std::complex<double>> eigenvalues;
  double spectral_radius = 0.0;
  /// min |mu - 1|
  double distance_to_one = 0.0;

  double distance_to(std::complex<double> z) const;
};

SpectrumReport spectrum(const QOperator& q, const NonlocalOptions& options = {});

/// 2-norm condition number via SVD (dense LU estimate above the spectrum budget).
double condition_number(const Eigen::MatrixXd& m, std::size_t exact_budget = 1024);

enum class SolveMethod { Direct, Neumann };

struct NonlocalSolution {
  BSPDESolution solution;
  /// u(., T), the fixed point of (I - Q)
  AdaptedField terminal;
  bool reduced = false;
  /// max over leaves of |u(., T) - Gamma u - xi|_inf
  double boundary_residual = 0.0;
  double integral_residual = 0.0;
  double condition_number = 0.0;
  /// Neumann path only
  double spectral_radius = 0.0;
  int iterations = 0;
  double contraction_factor = 0.0;
  double predicted_iterations = 0.0;
  double snap_distance = 0.0;
};

/// u = L_T phi + Lambda_T (I - Q)^{-1} (xi + T phi). `xi` is a field at level
/// M (deterministic for the reduced path) or empty for xi = 0.
NonlocalSolution solve_nonlocal(const NonlocalCondition& cond, const AdaptedField& phi, const AdaptedField& xi,
                                const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs,
                                SolveMethod method = SolveMethod::Direct, const NonlocalOptions& options = {});

/// Same with an already assembled Q for `cond`.
NonlocalSolution solve_nonlocal(const QOperator& q, const NonlocalCondition& cond, const AdaptedField& phi,
                                const AdaptedField& xi, const ScenarioTree& tree, const Grid& grid,
                                const CoefficientSet& coeffs, SolveMethod method = SolveMethod::Direct,
                                const NonlocalOptions& options = {});

struct EpsilonRow {
  double eps = 0.0;
  /// 1/(1+eps) lies within the flag tolerance of an eigenvalue of Q
  bool flagged = false;
  bool solved = false;
  bool solvable = false;
  double condition_number = 0.0;
  double boundary_residual = 0.0;
  /// min |1/(1+eps) - mu| over the spectrum
  double spectral_distance = 0.0;
  /// condition number above the Fredholm threshold
  bool near_singular = false;
};

struct SweepOptions {
  double flag_tol = 1e-6;
  NonlocalOptions nonlocal;
};

/// Solves with Gamma replaced by (1 + eps) Gamma for each eps; rows whose
/// 1/(1+eps) hits the spectrum are flagged and skipped.
std::vector<EpsilonRow> sweep_epsilon(const NonlocalCondition& cond, const std::vector<double>& eps_grid,
                                      const AdaptedField& phi, const AdaptedField& xi, const ScenarioTree& tree,
                                      const Grid& grid, const CoefficientSet& coeffs,
                                      const SweepOptions& options = {});

}  // namespace bspde
