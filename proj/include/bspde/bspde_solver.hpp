#pragma once

#include <vector>

#include "bspde/adapted_field.hpp"
#include "bspde/scenario_tree.hpp"
#include "bspde/spatial_disc.hpp"

namespace bspde {

struct SolverOptions {
  /// Relative tolerance of the per-node martingale representation.
  double representation_tol = 1e-10;
};

struct SolverDiagnostics {
  /// max |K u(t) - rhs| + representation error over all nodes and children
  double max_step_residual = 0.0;
  /// max over levels and nodes of |u(0) - u(t) - S(t)|, S(t) the accumulated
  /// drift and stochastic-integral sums along the path to that node
  double max_path_residual = 0.0;
  /// smallest |d| - |l| - |u| of the implicit systems I - dt A
  double min_dominance_margin = 0.0;
  bool diagonally_dominant = true;
  /// dt > h while some beta_i is non-zero (the chi coupling is explicit)
  bool explicit_coupling_warning = false;
  /// solved on the collapsed tree because every input was deterministic
  bool deterministic_path = false;
};

/// Adapted pair (u, chi_1..chi_N) of the backward equation on levels 0..s.
struct BSPDESolution {
  AdaptedField u;
  std::vector<AdaptedField> chi;
  int terminal_level = 0;
  double dt = 0.0;
  double h = 0.0;
  SolverDiagnostics diagnostics;
};

/// Backward induction from u(., s) = Phi.
///
/// At each level t and node: the children of u(., t+1) are split jointly into
/// their conditional mean m and chi_i(., t); then
///   (I - dt A) u(., t) = m + dt (phi(., t) + sum_i B_i chi_i(., t)),
/// which gives the discrete identity
///   u(t) = u(t+1) + dt (A u(t) + phi(t) + sum_i B_i chi_i(t)) - sum_i chi_i(t) dw_i(t).
/// When the coefficients, Phi and phi are all deterministic the sweep runs on
/// the collapsed tree and chi is identically zero.
///
/// `phi` may be empty (zero source); otherwise it must cover levels 0..s-1.
BSPDESolution solve_cauchy_backward(const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs, int s,
                                    const AdaptedField& Phi, const AdaptedField& phi, SolverOptions options = {});

/// L_s phi: zero terminal data.
BSPDESolution operator_L(const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs, int s,
                         const AdaptedField& phi, SolverOptions options = {});
/// Lambda_s Phi: zero source.
BSPDESolution operator_Lambda(const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs, int s,
                              const AdaptedField& Phi, SolverOptions options = {});

/// max over paths and levels of |u(0) - u(t) - sum_{r<t} dt (A u + phi + sum_i B_i chi_i)(r)
/// + sum_{r<t} sum_i chi_i(r) dw_i(r)|, evaluated from scratch for any pair
/// (u, chi) on levels 0..s of `tree`.
double integral_identity_residual(const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs,
                                  const AdaptedField& u, const std::vector<AdaptedField>& chi,
                                  const AdaptedField& phi, int s);

struct NormReport {
  /// max_t sqrt(E |u(t)|_h^2)
  double u_sup = 0.0;
  /// sqrt(sum_t dt E(|u(t)|_h^2 + |u(t)|_{H1}^2))
  double u_x1 = 0.0;
  double u_y1 = 0.0;
  std::vector<double> chi_x0;
  double phi_x0 = 0.0;
  double terminal_norm = 0.0;
  /// (|u|_Y1 + sum |chi_i|) / (|phi| + |Phi|); zero for zero data
  double ratio = 0.0;

  double solution_total() const;
};

/// Discrete norms of a solution and of its data. `data_terminal` is whatever
/// terminal-space quantity the caller regards as input (Phi, or xi for the
/// non-local problem).
NormReport energy_norms(const BSPDESolution& sol, const AdaptedField& data_terminal, const AdaptedField& phi);

/// Multiplies level t of `field` by exp(q (s - t) dt).
AdaptedField exponential_weight(const AdaptedField& field, double q, int s, double dt);

/// u_q = exp(q (T - t)) u and likewise for every chi_i, with T the terminal time of `sol`.
BSPDESolution exponential_weight_transform(const BSPDESolution& sol, double q);

/// H1 seminorm squared, h sum_j ((v_{j+1} - v_j) / h)^2, zero Dirichlet ends.
double h1_seminorm_sq(const Eigen::Ref<const Eigen::VectorXd>& v, double h);

}  // namespace bspde
