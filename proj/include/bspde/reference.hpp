#pragma once

namespace bspde::reference {

/// P(tau > T) for a Brownian motion with variance rate sigma2 started at `a`
/// and killed on leaving (x_min, x_max), from the Dirichlet eigen-expansion.
double survival_series(double a, double x_min, double x_max, double sigma2, double horizon, int terms = 200);

/// The same averaged over a uniform start on (x_min, x_max).
double uniform_survival_series(double x_min, double x_max, double sigma2, double horizon, int terms = 200);

}  // namespace bspde::reference
