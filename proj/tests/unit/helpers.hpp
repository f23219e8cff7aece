#pragma once

#include <cmath>
#include <numbers>

#include "bspde/random_keys.hpp"
#include "bspde/spatial_disc.hpp"

namespace testing_support {

inline constexpr double kPi = std::numbers::pi;

inline bspde::CoefficientModel heat_model(double b, double killing, int N = 1) {
  bspde::CoefficientModel m;
  m.b = bspde::CoefficientFn::constant(b);
  m.killing = bspde::CoefficientFn::constant(killing);
  for (int i = 0; i < N; ++i) {
    m.beta.push_back(bspde::CoefficientFn::constant(0.0));
    m.beta_bar.push_back(bspde::CoefficientFn::constant(0.0));
  }
  return m;
}

/// Node-dependent coefficients with sizeable noise terms, coercive with margin.
inline bspde::CoefficientModel random_model(std::uint64_t seed) {
  using bspde::CoefficientFn;
  using bspde::PointContext;
  bspde::CoefficientModel m;
  m.b = CoefficientFn::random([seed](const PointContext& c) { return 1.0 + 0.2 * bspde::keyed_uniform(seed, 1, c.level, c.node); });
  m.drift = CoefficientFn::random([seed](const PointContext& c) {
    return 0.5 * (2.0 * bspde::keyed_uniform(seed, 2, c.level, c.node) - 1.0) * std::cos(c.x);
  });
  m.killing = CoefficientFn::random([seed](const PointContext& c) { return 0.5 + bspde::keyed_uniform(seed, 3, c.level, c.node); });
  m.beta = {CoefficientFn::random([seed](const PointContext& c) {
    return (0.3 + 0.1 * bspde::keyed_uniform(seed, 4, c.level, c.node)) * std::sin(kPi * c.x);
  })};
  m.beta_bar = {CoefficientFn::random([seed](const PointContext& c) {
    return 0.2 * (2.0 * bspde::keyed_uniform(seed, 5, c.level, c.node) - 1.0);
  })};
  return m;
}

inline bspde::AdaptedField random_field(const bspde::ScenarioTree& tree, int first, int last, int J, std::uint64_t seed) {
  bspde::AdaptedField f = bspde::AdaptedField::zeros(tree, first, last, J, bspde::Measurability::Adapted);
  for (int t = first; t <= last; ++t) {
    auto& m = f.level(t);
    for (Eigen::Index n = 0; n < m.rows(); ++n)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(n, j) = 2.0 * bspde::keyed_uniform(seed, t, n, j) - 1.0;
  }
  return f;
}

inline Eigen::VectorXd sine(const bspde::Grid& g) {
  return g.sample([&](double x) { return std::sin(kPi * (x - g.x_min()) / g.length()); });
}

}  // namespace testing_support
