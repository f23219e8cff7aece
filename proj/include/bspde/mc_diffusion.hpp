#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "bspde/spatial_disc.hpp"

namespace bspde {

struct Interval {
  double x_min = 0.0;
  double x_max = 1.0;
  bool contains(double x) const noexcept { return x > x_min && x < x_max; }
};

struct PointStart {
  double a = 0.5;
};
struct UniformStart {};
/// Piecewise-constant density on the cells centred at the grid points.
struct DensityStart {
  Grid grid;
  Eigen::VectorXd density;
};
using InitialLaw = std::variant<PointStart, UniformStart, DensityStart>;

struct McOptions {
  std::int64_t n_paths = 100000;
  double dt = 1e-3;
  double horizon = 1.0;
  std::uint64_t seed = 1;
  int threads = 1;
  /// Kill a path that stays inside over a step with the Brownian-bridge
  /// crossing probability, removing the O(sqrt(dt)) discrete-monitoring bias.
  bool bridge_exit = true;
  /// Paths per independently seeded block; results do not depend on threads.
  std::int64_t block_size = 4096;
};

struct PathRecord {
  double start = 0.0;
  double position = 0.0;
  /// first exit time, +inf when the path survives to the horizon
  double exit_time = 0.0;
  bool survived = false;
  /// int lambda~ dt, sum_i int beta_bar_i dw_i, sum_i int beta_bar_i^2 dt up to min(tau, T)
  double int_killing = 0.0;
  double int_beta_bar_dw = 0.0;
  double int_beta_bar_sq = 0.0;
};

/// Moments of the per-step displacement dy over every simulated step.
struct StepMoments {
  std::int64_t count = 0;
  double sum = 0.0;
  double sum_sq = 0.0;
  double sum_quad = 0.0;

  double mean() const { return count > 0 ? sum / count : 0.0; }
  double variance() const;
  /// standard error of the mean square displacement
  double variance_se() const;
};

struct PathEnsemble {
  McOptions options;
  Interval domain;
  std::vector<PathRecord> paths;
  StepMoments moments;
};

/// Euler-Maruyama paths of dy = f~ dt + sum_i beta_i dw_i + beta~ dw~ with
/// f~ = f^ - sum_i beta_bar_i beta_i and beta~ = sqrt(2b - sum_i beta_i^2),
/// killed at the first exit from the domain. Coefficients must be
/// deterministic and in non-divergence form.
PathEnsemble simulate_paths(const CoefficientModel& model, Interval domain, const InitialLaw& law,
                            const McOptions& options);

struct GirsanovWeights {
  /// exp(sum int beta_bar dw - 1/2 sum int beta_bar^2 dt)
  double gamma_m = 1.0;
  /// exp(-int lambda~ dt) gamma_m
  double gamma = 1.0;
};

GirsanovWeights girsanov_weight(const PathRecord& path);

struct WeightedEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double n_effective = 0.0;
};

/// P(tau > T) with a 95% Wilson score interval.
WeightedEstimate estimate_exit_bound(const PathEnsemble& ensemble);
WeightedEstimate estimate_exit_bound(const CoefficientModel& model, Interval domain, const InitialLaw& law,
                                     const McOptions& options);

/// E[1_{tau >= T} gamma(T) Phi(y(T))] with a normal 95% interval.
WeightedEstimate feynman_kac_estimate(const PathEnsemble& ensemble, const std::function<double(double)>& Phi);

/// E[gamma_M(min(tau, T))], which is 1 for the exponential martingale.
WeightedEstimate martingale_mean(const PathEnsemble& ensemble);

struct FeynmanKacReport {
  WeightedEstimate mc;
  double tree_value = 0.0;
  double gap = 0.0;
  /// max(3 SE, discretization_tol * |tree_value|)
  double tolerance = 0.0;
  bool pass = false;
};

/// Compares the Monte Carlo functional with a tree-computed <p(T), Phi>.
FeynmanKacReport feynman_kac_check(const CoefficientModel& model, Interval domain, const InitialLaw& law,
                                   const std::function<double(double)>& Phi, double tree_value,
                                   double discretization_tol, const McOptions& options);

struct Nu2Report {
  double q = 0.0;
  double nu2 = 0.0;
  /// 1/2 sum_i int sup beta_bar_i^2 dt + log nu
  double smallb_lhs = 0.0;
  bool condition_iii = false;
  double best_q = 0.0;
  double best_nu2 = 0.0;
};

/// nu_2(q) = nu^{1/p} exp((1/p)[log nu + (q/2) S]) with 1/p + 1/q = 1 and
/// S = sum_i int_0^T sup beta_bar_i^2 dt; also scans q for the smallest nu_2.
Nu2Report evaluate_nu2(double q, double nu, double beta_bar_sq_integral);

/// S = sum_i int_0^T sup_{x, node} beta_bar_i^2 dt on the tree levels 0..M-1.
double beta_bar_sup_integral(const CoefficientSet& coeffs, double dt);

/// Flat binary dump: "BSPDEMC1", uint64 path count, double dt, double horizon,
/// uint64 seed, then seven doubles per path (start, position, exit_time,
/// survived, int_killing, int_beta_bar_dw, int_beta_bar_sq), little-endian.
void write_path_dump(const PathEnsemble& ensemble, const std::string& path);

}  // namespace bspde
