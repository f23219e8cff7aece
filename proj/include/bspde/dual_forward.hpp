#pragma once

#include <vector>

#include <Eigen/Dense>

#include "bspde/adapted_field.hpp"
#include "bspde/scenario_tree.hpp"
#include "bspde/spatial_disc.hpp"

namespace bspde {

struct DualOptions {
  /// relative tolerance for the positivity check
  double positivity_tol = 1e-12;
};

/// Forward density p on levels s..M started from rho at level s.
struct DualDensity {
  AdaptedField p;
  Eigen::VectorXd rho;
  int start_level = 0;
  /// E h sum_j p(t, ., j) for t = s..M
  std::vector<double> mass;
  double min_value = 0.0;
  /// p >= -tol * max|p| everywhere (vacuous when rho has negative entries)
  bool positivity_ok = true;
  /// every one-step map has non-negative entries; false signals a Peclet
  /// (drift-dominated) stencil or a large noise coefficient
  bool monotone_scheme = true;
  bool mass_non_increasing = true;
};

/// Forward sweep built as the transpose of the backward one-step map.
///
/// The backward step writes u(n) = sum_c pi_c G_c u(c) with
/// G_c = (I - dt A)^{-1} (I + sum_i dw_i^c B_i), so the forward step is
///   p(c) = (I + sum_i dw_i^c B_i^T) (I - dt A^T)^{-1} p(n),
/// a discretisation of dp = A* p dt + sum_i B_i* p dw_i. This makes
/// <p(t), u(t)> constant in expectation up to round-off.
///
/// Deterministic noise-free coefficients run on the collapsed tree. On a
/// collapsed tree with deterministic coefficients the result is E p.
DualDensity solve_forward_dual(const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs, int s,
                               const Eigen::VectorXd& rho, DualOptions options = {});

struct DualityReport {
  /// <rho, Q Phi> through the backward solve
  double lhs = 0.0;
  /// <kappa p(T), Phi> through the forward dual
  double rhs = 0.0;
  double gap = 0.0;
};

/// Both sides of (rho, Q Phi) = (kappa p(T), Phi) for Gamma u = kappa u(., 0).
/// `Phi` is a field at level M, deterministic or adapted.
DualityReport duality_check(const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs, double kappa,
                            const Eigen::VectorXd& rho, const AdaptedField& Phi);

/// E h sum_j p(T, ., j) Phi(., j) for a forward density started at level 0.
double expected_pairing(const DualDensity& dual, const AdaptedField& Phi, double h);

struct MassReport {
  double final_mass = 0.0;
  double bound = 0.0;
  bool pass = false;
  std::vector<double> trajectory;
  bool non_increasing = true;
  bool positivity_ok = true;
};

/// Checks E int p(x, T) dx <= nu_star for rho >= 0 with int rho = 1.
MassReport mass_contraction_check(const ScenarioTree& tree, const Grid& grid, const CoefficientSet& coeffs,
                                  const Eigen::VectorXd& rho, double nu_star, double tol = 1e-12);

/// nu_1 = exp(-c T) with c the smallest killing rate; 1 when c <= 0.
double nu1_bound(const CoefficientSet& coeffs, double horizon);

/// The |kappa| < 1 case rewritten for u_q = exp(q (T - t)) u with
/// q = log|kappa| / T: the killing rate becomes lambda - q and the boundary
/// condition becomes u_q(T) = sign(kappa) u_q(0).
struct KappaReduction {
  double q = 0.0;
  double sign = 1.0;
  /// bound nu_1 of the transformed problem, equal to |kappa|
  double nu1 = 1.0;
  CoefficientSet coeffs;
};

KappaReduction reduce_kappa(const CoefficientSet& coeffs, double kappa, double horizon);

}  // namespace bspde
