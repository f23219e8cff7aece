#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "bspde/errors.hpp"
#include "bspde/mc_diffusion.hpp"
#include "bspde/reference.hpp"
#include "helpers.hpp"

using namespace bspde;
using namespace testing_support;

namespace {

// P(tau > T), Brownian motion with variance rate s2 on (0, L) started at a
double series(double a, double L, double s2, double T) {
  double p = 0.0;
  for (int n = 1; n < 400; n += 2)
    p += 4.0 / (n * kPi) * std::sin(n * kPi * a / L) * std::exp(-s2 * n * n * kPi * kPi * T / (2.0 * L * L));
  return p;
}

CoefficientModel bm(double b) {
  CoefficientModel m = heat_model(b, 0.0, 0);
  return m;
}

}  // namespace

TEST_CASE("eigen-series references") {
  CHECK(reference::survival_series(0.5, 0.0, 1.0, 1.0, 1.0) == doctest::Approx(0.0091570).epsilon(1e-4));
  CHECK(reference::survival_series(0.3, 0.0, 1.0, 1.0, 1.0) == doctest::Approx(series(0.3, 1.0, 1.0, 1.0)).epsilon(1e-12));
  CHECK(reference::survival_series(1.3, 1.0, 3.0, 0.5, 0.7) ==
        doctest::Approx(series(0.3, 2.0, 0.5, 0.7)).epsilon(1e-12));
  // uniform start: Simpson over the point series
  const int n = 2000;
  double s = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    s += w * series(k / double(n), 1.0, 2.0, 0.1);
  }
  s /= 3.0 * n;
  CHECK(reference::uniform_survival_series(0.0, 1.0, 2.0, 0.1) == doctest::Approx(s).epsilon(1e-8));
}

TEST_CASE("survival probability with the bridge correction matches the series") {
  McOptions o;
  o.n_paths = 40000;
  o.dt = 1e-2;
  o.horizon = 0.2;
  o.seed = 17;
  const WeightedEstimate e = estimate_exit_bound(bm(0.5), {0.0, 1.0}, PointStart{0.5}, o);
  const double exact = series(0.5, 1.0, 1.0, 0.2);
  CHECK(std::abs(e.estimate - exact) < 4.0 * e.std_error);

  // Wilson interval, recomputed here
  const double n = 40000.0, z = 1.959964, p = e.estimate;
  const double c = (p + z * z / (2 * n)) / (1 + z * z / n);
  const double h = z / (1 + z * z / n) * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n));
  CHECK(e.ci_low == doctest::Approx(c - h).epsilon(1e-6));
  CHECK(e.ci_high == doctest::Approx(c + h).epsilon(1e-6));

  // without the bridge a coarse step overestimates survival
  o.bridge_exit = false;
  CHECK(estimate_exit_bound(bm(0.5), {0.0, 1.0}, PointStart{0.5}, o).estimate > exact + 4.0 * e.std_error);
}

TEST_CASE("paths are reproducible and independent of the thread count") {
  McOptions o;
  o.n_paths = 5000;
  o.dt = 1e-2;
  o.horizon = 0.3;
  o.block_size = 700;
  CoefficientModel m = bm(0.4);
  m.drift = CoefficientFn::profile([](double x, double) { return 0.3 - x; });
  m.killing = CoefficientFn::constant(0.5);
  m.beta = {CoefficientFn::profile([](double x, double) { return 0.3 * std::sin(kPi * x); })};
  m.beta_bar = {CoefficientFn::constant(0.4)};
  const PathEnsemble a = simulate_paths(m, {0.0, 1.0}, UniformStart{}, o);
  o.threads = 3;
  const PathEnsemble b = simulate_paths(m, {0.0, 1.0}, UniformStart{}, o);
  REQUIRE(a.paths.size() == 5000);
  bool same = true;
  for (std::size_t i = 0; i < a.paths.size(); ++i)
    same = same && a.paths[i].position == b.paths[i].position && a.paths[i].exit_time == b.paths[i].exit_time &&
           a.paths[i].int_beta_bar_dw == b.paths[i].int_beta_bar_dw;
  CHECK(same);
  CHECK(a.moments.sum_sq == b.moments.sum_sq);
  o.seed = 2;
  CHECK(simulate_paths(m, {0.0, 1.0}, UniformStart{}, o).paths[0].start != a.paths[0].start);

  for (const auto& p : a.paths) {
    CHECK(p.start > 0.0);
    CHECK(p.start < 1.0);
    if (p.survived) CHECK(std::isinf(p.exit_time));
    else CHECK(p.exit_time <= 0.3 + 1e-12);
  }
}

TEST_CASE("step displacement variance is 2 b dt") {
  McOptions o;
  o.n_paths = 4000;
  o.dt = 1e-3;
  o.horizon = 0.02;
  const PathEnsemble e = simulate_paths(bm(0.7), {-10.0, 10.0}, PointStart{0.0}, o);
  const double ms = e.moments.sum_sq / static_cast<double>(e.moments.count);
  CHECK(std::abs(ms - 1.4e-3) < 5.0 * e.moments.variance_se());
  CHECK(std::abs(e.moments.mean()) < 5.0 * std::sqrt(1.4e-3 / e.moments.count));
}

TEST_CASE("Girsanov weights average to one; Feynman-Kac with killing") {
  McOptions o;
  o.n_paths = 20000;
  o.dt = 1e-2;
  o.horizon = 0.2;
  o.seed = 5;
  CoefficientModel m = bm(0.5);
  m.killing = CoefficientFn::constant(1.0);
  m.beta = {CoefficientFn::constant(0.0)};
  m.beta_bar = {CoefficientFn::constant(0.6)};
  const PathEnsemble e = simulate_paths(m, {-20.0, 20.0}, PointStart{0.0}, o);
  const WeightedEstimate w = martingale_mean(e);
  CHECK(std::abs(w.estimate - 1.0) < 4.0 * w.std_error);
  // beta = 0 with constant beta_bar: the weight is independent of y, so E[gamma Phi] = e^{-T} E[Phi]
  const WeightedEstimate fk = feynman_kac_estimate(e, [](double x) { return x * x; });
  CHECK(std::abs(fk.estimate - std::exp(-0.2) * 0.2) < 4.0 * fk.std_error);

  // killed BM on (0, 1): e^{-cT} P(tau > T)
  CoefficientModel k = bm(0.5);
  k.killing = CoefficientFn::constant(1.0);
  const double tree_value = std::exp(-0.2) * series(0.5, 1.0, 1.0, 0.2);
  const FeynmanKacReport r = feynman_kac_check(k, {0.0, 1.0}, PointStart{0.5}, [](double) { return 1.0; },
                                               tree_value, 0.0, o);
  CHECK(r.pass);
  CHECK(r.tolerance == doctest::Approx(3.0 * r.mc.std_error));
}

TEST_CASE("residual diffusion must stay positive") {
  CoefficientModel m = bm(0.1);
  m.beta = {CoefficientFn::constant(0.5)};
  m.beta_bar = {CoefficientFn::constant(0.0)};
  McOptions o;
  o.n_paths = 10;
  CHECK_THROWS_AS(simulate_paths(m, {0.0, 1.0}, PointStart{0.5}, o), ConditionError);
  CoefficientModel r = bm(0.5);
  r.b = CoefficientFn::random([](const PointContext&) { return 1.0; });
  CHECK_THROWS_AS(simulate_paths(r, {0.0, 1.0}, PointStart{0.5}, o), DomainError);
  o.n_paths = 0;
  CHECK_THROWS_AS(simulate_paths(bm(0.5), {0.0, 1.0}, PointStart{0.5}, o), DomainError);
}

TEST_CASE("nu_2 value, scan and domain") {
  const Nu2Report r = evaluate_nu2(2.0, 0.5, 0.2);
  const double oracle = std::sqrt(0.5) * std::exp(0.5 * (std::log(0.5) + 0.2));
  CHECK(r.nu2 == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(r.nu2 == doctest::Approx(0.552585).epsilon(1e-5));
  CHECK(r.smallb_lhs == doctest::Approx(0.1 + std::log(0.5)));
  CHECK(r.condition_iii);
  CHECK(r.best_nu2 <= r.nu2);
  CHECK(r.best_nu2 < 1.0);
  const Nu2Report f = evaluate_nu2(2.0, 0.5, 2.0);
  CHECK_FALSE(f.condition_iii);
  CHECK(f.nu2 > 1.0);
  CHECK_THROWS_AS(evaluate_nu2(1.0, 0.5, 0.2), DomainError);
  CHECK_THROWS_AS(evaluate_nu2(2.0, 1.0, 0.2), DomainError);
  CHECK_THROWS_AS(evaluate_nu2(2.0, 0.5, -1.0), DomainError);

  const ScenarioTree tree = ScenarioTree::collapsed(10, 1, 1.0);
  CoefficientModel m = bm(1.0);
  m.beta = {CoefficientFn::constant(0.0)};
  m.beta_bar = {CoefficientFn::profile([](double x, double) { return 0.3 * x; })};
  const Grid g(0.0, 1.0, 9);
  CHECK(beta_bar_sup_integral(discretize(m, tree, g), tree.dt()) == doctest::Approx(0.09 * 0.81));
}

TEST_CASE("binary path dump layout") {
  McOptions o;
  o.n_paths = 3;
  o.dt = 0.05;
  o.horizon = 0.1;
  o.seed = 99;
  const PathEnsemble e = simulate_paths(bm(0.5), {0.0, 1.0}, PointStart{0.25}, o);
  const auto file = std::filesystem::temp_directory_path() / "bspde_dump_test.bin";
  write_path_dump(e, file.string());
  std::ifstream in(file, std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  CHECK(std::string(magic, 8) == "BSPDEMC1");
  std::uint64_t count, seed;
  double dt, horizon, rec[7];
  in.read(reinterpret_cast<char*>(&count), 8);
  in.read(reinterpret_cast<char*>(&dt), 8);
  in.read(reinterpret_cast<char*>(&horizon), 8);
  in.read(reinterpret_cast<char*>(&seed), 8);
  CHECK(count == 3);
  CHECK(dt == 0.05);
  CHECK(horizon == 0.1);
  CHECK(seed == 99);
  for (int i = 0; i < 3; ++i) {
    in.read(reinterpret_cast<char*>(rec), sizeof rec);
    CHECK(rec[0] == 0.25);
    CHECK(rec[1] == e.paths[i].position);
    CHECK(rec[3] == (e.paths[i].survived ? 1.0 : 0.0));
  }
  CHECK(in.peek() == std::char_traits<char>::eof());
  std::filesystem::remove(file);
}
