#include "bspde/reference.hpp"

#include <cmath>
#include <numbers>

namespace bspde::reference {

double survival_series(double a, double x_min, double x_max, double sigma2, double horizon, int terms) {
  const double length = x_max - x_min;
  if (!(a > x_min && a < x_max)) return 0.0;
  const double pi = std::numbers::pi;
  double sum = 0.0;
  for (int k = 1; k <= terms; k += 2) {
    const double mode = k * pi / length;
    sum += 4.0 / (k * pi) * std::sin(mode * (a - x_min)) * std::exp(-0.5 * sigma2 * mode * mode * horizon);
  }
  return sum;
}

double uniform_survival_series(double x_min, double x_max, double sigma2, double horizon, int terms) {
  const double length = x_max - x_min;
  const double pi = std::numbers::pi;
  double sum = 0.0;
  for (int k = 1; k <= terms; k += 2) {
    const double mode = k * pi / length;
    sum += 8.0 / (k * k * pi * pi) * std::exp(-0.5 * sigma2 * mode * mode * horizon);
  }
  return sum;
}

}  // namespace bspde::reference
