#include <doctest.h>

#include <cmath>

#include "bspde/bspde_solver.hpp"
#include "bspde/errors.hpp"
#include "helpers.hpp"

using namespace bspde;
using namespace testing_support;

namespace {

Eigen::MatrixXd implicit_dense(const CoefficientSet& c, const Grid& g, double dt) {
  return Eigen::MatrixXd::Identity(g.size(), g.size()) - dt * assemble_A(c, g, 0, 0).dense();
}

}  // namespace

TEST_CASE("deterministic problem equals repeated dense implicit steps") {
  const ScenarioTree tree = ScenarioTree::build(10, 1, 0.5);
  const Grid grid(0.0, 1.0, 20);
  const CoefficientSet c = discretize(heat_model(0.7, 0.4), tree, grid);
  const Eigen::VectorXd Phi = sine(grid) + 0.3 * grid.points();
  const Eigen::VectorXd phi = Eigen::VectorXd::Constant(20, 0.25);
  const BSPDESolution sol = solve_cauchy_backward(tree, grid, c, 10, AdaptedField::deterministic_terminal(10, Phi),
                                                  AdaptedField::constant_profile(0, 9, phi));
  CHECK(sol.diagnostics.deterministic_path);
  const Eigen::MatrixXd K = implicit_dense(c, grid, tree.dt());
  Eigen::VectorXd u = Phi;
  for (int t = 9; t >= 0; --t) u = K.partialPivLu().solve(u + tree.dt() * phi);
  CHECK((sol.u.at(0, 0) - u).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(sol.chi[0].max_abs() == 0.0);
}

TEST_CASE("noise-free coefficients: u(0) is the implicit propagation of E[Phi]") {
  const ScenarioTree tree = ScenarioTree::build(6, 1, 1.0);
  const Grid grid(0.0, 1.0, 12);
  const CoefficientSet c = discretize(heat_model(1.0, 0.5), tree, grid);
  const AdaptedField Phi = random_field(tree, 6, 6, 12, 3);
  const BSPDESolution sol = solve_cauchy_backward(tree, grid, c, 6, Phi, AdaptedField{});
  Eigen::VectorXd mean = Phi.level(6).colwise().mean().transpose();
  const Eigen::MatrixXd K = implicit_dense(c, grid, tree.dt());
  for (int t = 0; t < 6; ++t) mean = K.partialPivLu().solve(mean);
  CHECK((sol.u.at(0, 0) - mean).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("random coefficients and data: identities hold to round-off") {
  const ScenarioTree tree = ScenarioTree::build(7, 1, 1.0);
  const Grid grid(0.0, 1.0, 10);
  const CoefficientSet c = discretize(random_model(5), tree, grid);
  const AdaptedField Phi = random_field(tree, 7, 7, 10, 1);
  const AdaptedField phi = random_field(tree, 0, 6, 10, 2);
  const BSPDESolution sol = solve_cauchy_backward(tree, grid, c, 7, Phi, phi);
  CHECK(sol.diagnostics.max_step_residual < 1e-12);
  CHECK(sol.diagnostics.max_path_residual < 1e-12);
  CHECK(integral_identity_residual(tree, grid, c, sol.u, sol.chi, phi, 7) < 1e-12);
  CHECK(sol.diagnostics.explicit_coupling_warning);  // dt = 1/7 > h = 1/11

  // chi from the two-point formula at an arbitrary node
  const double s = std::sqrt(tree.dt());
  const NodeIndex n = 19;
  const Eigen::VectorXd up = sol.u.at(6, tree.child(n, 1));
  const Eigen::VectorXd down = sol.u.at(6, tree.child(n, 0));
  CHECK((sol.chi[0].at(5, n) - (up - down) / (2.0 * s)).cwiseAbs().maxCoeff() < 1e-12);

  // a perturbed u breaks the identity
  AdaptedField wrong = sol.u;
  wrong.level(3)(2, 4) += 1e-6;
  CHECK(integral_identity_residual(tree, grid, c, wrong, sol.chi, phi, 7) > 5e-7);
}

TEST_CASE("N = 2: terminal data affine in W(T) is representable, products are not") {
  const ScenarioTree tree = ScenarioTree::build(4, 2, 1.0);
  const Grid grid(0.0, 1.0, 8);
  CoefficientModel m = heat_model(1.0, 0.2, 2);
  m.beta = {CoefficientFn::profile([](double x, double) { return 0.3 * std::sin(kPi * x); }),
            CoefficientFn::constant(0.2)};
  m.beta_bar = {CoefficientFn::constant(0.1), CoefficientFn::constant(0.0)};
  const CoefficientSet c = discretize(m, tree, grid);

  // W_i(T) along the path to each leaf
  auto brownian = [&](NodeIndex leaf, int i) {
    double w = 0.0;
    for (int t = 4; t >= 1; --t) {
      w += tree.increments(tree.branch_of(leaf))[i];
      leaf = tree.parent(leaf);
    }
    return w;
  };
  AdaptedField affine = AdaptedField::zeros(tree, 4, 4, 8, Measurability::Adapted);
  AdaptedField product = affine;
  const Eigen::VectorXd s = sine(grid);
  for (NodeIndex l = 0; l < tree.leaf_count(); ++l) {
    affine.at(4, l) = s * (1.0 + brownian(l, 0) - 0.5 * brownian(l, 1));
    product.at(4, l) = s * brownian(l, 0) * brownian(l, 1);
  }
  const BSPDESolution sol = solve_cauchy_backward(tree, grid, c, 4, affine, AdaptedField{});
  CHECK(sol.diagnostics.max_path_residual < 1e-12);
  CHECK_THROWS_AS(solve_cauchy_backward(tree, grid, c, 4, product, AdaptedField{}), RepresentationError);
}

TEST_CASE("L and Lambda are linear and add up to the full solve") {
  const ScenarioTree tree = ScenarioTree::build(5, 1, 1.0);
  const Grid grid(0.0, 1.0, 9);
  const CoefficientSet c = discretize(random_model(9), tree, grid);
  const AdaptedField Phi = random_field(tree, 5, 5, 9, 4);
  const AdaptedField phi = random_field(tree, 0, 4, 9, 5);
  const BSPDESolution full = solve_cauchy_backward(tree, grid, c, 5, Phi, phi);
  const BSPDESolution l = operator_L(tree, grid, c, 5, phi);
  const BSPDESolution lam = operator_Lambda(tree, grid, c, 5, Phi);
  CHECK((full.u.at(0, 0) - l.u.at(0, 0) - lam.u.at(0, 0)).cwiseAbs().maxCoeff() < 1e-13);
  const BSPDESolution l3 = operator_L(tree, grid, c, 5, 3.0 * phi);
  CHECK((l3.u.at(2, 3) - 3.0 * l.u.at(2, 3)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("terminal level s < M solves on levels 0..s") {
  const ScenarioTree tree = ScenarioTree::build(6, 1, 1.0);
  const Grid grid(0.0, 1.0, 7);
  const CoefficientSet c = discretize(random_model(2), tree, grid);
  const BSPDESolution sol = solve_cauchy_backward(tree, grid, c, 3, random_field(tree, 3, 3, 7, 8), AdaptedField{});
  CHECK(sol.u.last_level() == 3);
  CHECK(sol.diagnostics.max_path_residual < 1e-12);
}

TEST_CASE("input validation") {
  const ScenarioTree tree = ScenarioTree::build(3, 1, 1.0);
  const Grid grid(0.0, 1.0, 7);
  const CoefficientSet c = discretize(heat_model(1.0, 0.0), tree, grid);
  const AdaptedField Phi = AdaptedField::deterministic_terminal(3, sine(grid));
  CHECK_THROWS_AS(solve_cauchy_backward(tree, grid, c, 0, Phi, AdaptedField{}), DomainError);
  CHECK_THROWS_AS(solve_cauchy_backward(tree, grid, c, 2, Phi, AdaptedField{}), ShapeError);
  CHECK_THROWS_AS(solve_cauchy_backward(tree, Grid(0.0, 1.0, 8), c, 3, Phi, AdaptedField{}), ShapeError);
  CHECK_THROWS_AS(solve_cauchy_backward(tree, grid, c, 3, Phi, AdaptedField::constant_profile(0, 1, sine(grid))),
                  ShapeError);
}

TEST_CASE("energy norms scale linearly and vanish for zero data") {
  const ScenarioTree tree = ScenarioTree::build(4, 1, 1.0);
  const Grid grid(0.0, 1.0, 9);
  const CoefficientSet c = discretize(random_model(4), tree, grid);
  const AdaptedField Phi = random_field(tree, 4, 4, 9, 1);
  const NormReport n1 = energy_norms(operator_Lambda(tree, grid, c, 4, Phi), Phi, AdaptedField{});
  const NormReport n2 = energy_norms(operator_Lambda(tree, grid, c, 4, 2.0 * Phi), 2.0 * Phi, AdaptedField{});
  CHECK(n2.u_y1 == doctest::Approx(2.0 * n1.u_y1).epsilon(1e-13));
  CHECK(n2.chi_x0[0] == doctest::Approx(2.0 * n1.chi_x0[0]).epsilon(1e-13));
  CHECK(n2.ratio == doctest::Approx(n1.ratio).epsilon(1e-13));
  const AdaptedField zero = AdaptedField::deterministic_terminal(4, Eigen::VectorXd::Zero(9));
  const NormReport n0 = energy_norms(operator_Lambda(tree, grid, c, 4, zero), zero, AdaptedField{});
  CHECK(n0.u_y1 == 0.0);
  CHECK(n0.ratio == 0.0);
  // H1 seminorm of a hat on three points: h [(1)^2 + (0)^2 ... ] / h^2
  Eigen::VectorXd hat(3);
  hat << 0.0, 1.0, 0.0;
  CHECK(h1_seminorm_sq(hat, 0.5) == doctest::Approx(2.0 / 0.5));
}

TEST_CASE("exponential weight turns killing lambda into lambda - q, up to O(dt)") {
  // u solves the problem with killing 1; e^{q(T-t)} u should solve it with killing 1 - q
  const double q = 0.8;
  auto gap = [&](int M) {
    const ScenarioTree tree = ScenarioTree::collapsed(M, 1, 1.0);
    const Grid grid(0.0, 1.0, 15);
    const AdaptedField Phi = AdaptedField::deterministic_terminal(M, sine(grid));
    const BSPDESolution u = solve_cauchy_backward(tree, grid, discretize(heat_model(0.3, 1.0), tree, grid), M, Phi, {});
    const BSPDESolution uq = exponential_weight_transform(u, q);
    const BSPDESolution v =
        solve_cauchy_backward(tree, grid, discretize(heat_model(0.3, 1.0 - q), tree, grid), M, Phi, {});
    CHECK(uq.u.at(M, 0) == u.u.at(M, 0));
    return (uq.u.at(0, 0) - v.u.at(0, 0)).cwiseAbs().maxCoeff();
  };
  const double g1 = gap(50), g2 = gap(100);
  CHECK(g2 < 0.6 * g1);
  CHECK(g2 < 5e-3);
  // the opposite sign does not converge
  const ScenarioTree tree = ScenarioTree::collapsed(200, 1, 1.0);
  const Grid grid(0.0, 1.0, 15);
  const AdaptedField Phi = AdaptedField::deterministic_terminal(200, sine(grid));
  const BSPDESolution u = solve_cauchy_backward(tree, grid, discretize(heat_model(0.3, 1.0), tree, grid), 200, Phi, {});
  const BSPDESolution wrong =
      solve_cauchy_backward(tree, grid, discretize(heat_model(0.3, 1.0 + q), tree, grid), 200, Phi, {});
  const Eigen::VectorXd w0 = wrong.u.at(0, 0);
  CHECK((exponential_weight_transform(u, q).u.at(0, 0) - w0).cwiseAbs().maxCoeff() > w0.cwiseAbs().maxCoeff());
}
