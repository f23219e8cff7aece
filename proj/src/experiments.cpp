#include "bspde/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <sstream>

#include "bspde/errors.hpp"
#include "bspde/random_keys.hpp"
#include "bspde/reference.hpp"

namespace bspde {

namespace {

constexpr double kPi = std::numbers::pi;

// Salts separating the keyed random streams of one experiment.
constexpr std::uint64_t kSaltB = 1, kSaltDrift = 2, kSaltKilling = 3, kSaltBeta = 10, kSaltBetaBar = 20;
constexpr std::uint64_t kSaltPhi = 101, kSaltXi = 102, kSaltRho = 103, kSaltTerminal = 104;

std::uint64_t instance_seed(std::uint64_t seed, std::uint64_t salt, int instance) {
  return mix64(mix64(seed ^ (salt << 32)) + static_cast<std::uint64_t>(instance));
}

double signed_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return 2.0 * keyed_uniform(seed, a, b, c) - 1.0;
}

double max_abs_difference(const AdaptedField& a, const AdaptedField& b) {
  if (a.first_level() != b.first_level() || a.last_level() != b.last_level())
    throw ShapeError("max_abs_difference: level ranges differ");
  double worst = 0.0;
  for (int t = a.first_level(); t <= a.last_level(); ++t) {
    const NodeIndex rows = std::max(a.rows_at(t), b.rows_at(t));
    for (NodeIndex n = 0; n < rows; ++n) worst = std::max(worst, (a.at(t, n) - b.at(t, n)).cwiseAbs().maxCoeff());
  }
  return worst;
}

NonlocalOptions nonlocal_options(const RunOptions& opts) {
  NonlocalOptions o;
  o.threads = opts.threads;
  return o;
}

/// Rescales kappa of a single initial:kappa condition so that Q's dominant eigenvalue becomes `target`.
struct Rescaled {
  NonlocalCondition condition;
  double kappa = 0.0;
  double dominant = 0.0;
};

Rescaled rescale_initial(const NonlocalCondition& cond, double target, const ScenarioTree& tree, const Grid& grid,
                         const CoefficientSet& coeffs, const AdaptedField& phi, const AdaptedField& xi,
                         const NonlocalOptions& options, bool by_modulus) {
  if (cond.terms.size() != 1 || !std::holds_alternative<ScaledInitial>(cond.terms.front()))
    throw DomainError("eigenvalue targeting needs a single initial:kappa condition");
  const NonlocalCondition unit = NonlocalCondition::scaled_initial(1.0);
  const bool reduced = reduction_applies(unit, tree, grid, coeffs, phi, xi);
  const SpectrumReport spec = spectrum(assemble_Q(unit, tree, grid, coeffs, reduced, options), options);
  std::complex<double> dominant = 0.0;
  for (const auto& mu : spec.eigenvalues)
    if (std::abs(mu) > std::abs(dominant)) dominant = mu;
  if (std::abs(dominant) == 0.0) throw DomainError("eigenvalue targeting: Q is nilpotent");
  double scale;
  if (by_modulus) {
    scale = target / std::abs(dominant);
  } else {
    if (std::abs(dominant.imag()) > 1e-12 * std::abs(dominant) || dominant.real() <= 0.0)
      throw DomainError("eigenvalue targeting: the dominant eigenvalue of Q is not real and positive");
    scale = target / dominant.real();
  }
  const double sign = std::get<ScaledInitial>(cond.terms.front()).kappa < 0.0 ? -1.0 : 1.0;
  Rescaled r;
  r.kappa = sign * scale;
  r.condition = NonlocalCondition::scaled_initial(r.kappa);
  r.condition.scale = cond.scale;
  r.dominant = std::abs(dominant);
  return r;
}

double sine_bump(double x, double x_min, double x_max) { return std::sin(kPi * (x - x_min) / (x_max - x_min)); }

Eigen::VectorXd profile_on_grid(const Profile& p, const Grid& grid) {
  if (p.random()) throw DomainError("random profiles are not allowed here");
  return grid.sample([&](double x) {
    return p.kind == Profile::Kind::Sine ? p.c + p.a * sine_bump(x, grid.x_min(), grid.x_max()) : p.c;
  });
}

}  // namespace

Check Check::info(std::string name, double value) { return {std::move(name), value, Relation::Info, 0.0, true}; }

Check Check::at_most(std::string name, double value, double threshold) {
  return {std::move(name), value, Relation::LessEqual, threshold, value <= threshold};
}

Check Check::at_least(std::string name, double value, double threshold) {
  return {std::move(name), value, Relation::GreaterEqual, threshold, value >= threshold};
}

Check Check::equals(std::string name, double value, double expected) {
  return {std::move(name), value, Relation::Equal, expected, value == expected};
}

const char* relation_symbol(Relation r) {
  switch (r) {
    case Relation::LessEqual: return "<=";
    case Relation::GreaterEqual: return ">=";
    case Relation::Equal: return "==";
    case Relation::Info: return "info";
  }
  return "?";
}

Profile parse_profile(const std::string& text) {
  const std::string t = trim(text);
  const auto colon = t.find(':');
  if (colon == std::string::npos) throw DomainError("profile '" + t + "' must look like name:parameters");
  const std::string name = t.substr(0, colon);
  const auto params = split(t.substr(colon + 1), ',');
  std::vector<double> v;
  for (const auto& p : params) {
    const auto d = parse_number(p);
    if (!d) throw DomainError("profile '" + t + "': '" + p + "' is not a number");
    v.push_back(*d);
  }
  auto want = [&](std::size_t n) {
    if (v.size() != n)
      throw DomainError("profile '" + t + "': " + name + " takes " + std::to_string(n) + " parameter(s)");
  };
  if (name == "const") {
    want(1);
    return Profile::constant(v[0]);
  }
  want(2);
  if (name == "sine") return {Profile::Kind::Sine, v[0], v[1]};
  if (name == "random") return {Profile::Kind::Random, v[0], v[1]};
  if (name == "random_sine") return {Profile::Kind::RandomSine, v[0], v[1]};
  throw DomainError("unknown profile '" + name + "' (expected const, sine, random or random_sine)");
}

CoefficientFn make_coefficient(const Profile& p, double x_min, double x_max, std::uint64_t seed, std::uint64_t salt) {
  const double a = p.a;
  const double c = p.c;
  switch (p.kind) {
    case Profile::Kind::Constant:
      return CoefficientFn::constant(c);
    case Profile::Kind::Sine:
      return CoefficientFn::profile([=](double x, double) { return c + a * sine_bump(x, x_min, x_max); });
    case Profile::Kind::Random:
      return CoefficientFn::random([=](const PointContext& ctx) {
        return c + a * signed_uniform(seed, salt, static_cast<std::uint64_t>(ctx.level),
                                      static_cast<std::uint64_t>(ctx.node));
      });
    case Profile::Kind::RandomSine:
      return CoefficientFn::random([=](const PointContext& ctx) {
        const double u = signed_uniform(seed, salt, static_cast<std::uint64_t>(ctx.level),
                                        static_cast<std::uint64_t>(ctx.node));
        return (c + a * u) * sine_bump(ctx.x, x_min, x_max);
      });
  }
  throw DomainError("make_coefficient: unknown profile kind");
}

ScenarioTree Discretization::tree() const { return ScenarioTree::build(M, N, horizon, TreeOptions{node_budget}); }

bool CoefficientSpec::random() const {
  bool r = b.random() || drift.random() || killing.random();
  for (const auto& p : beta) r = r || p.random();
  for (const auto& p : beta_bar) r = r || p.random();
  return r;
}

CoefficientModel CoefficientSpec::model(double x_min, double x_max, std::uint64_t seed) const {
  CoefficientModel m;
  m.form = form;
  m.b = make_coefficient(b, x_min, x_max, seed, kSaltB);
  m.drift = make_coefficient(drift, x_min, x_max, seed, kSaltDrift);
  m.killing = make_coefficient(killing, x_min, x_max, seed, kSaltKilling);
  for (std::size_t i = 0; i < beta.size(); ++i) m.beta.push_back(make_coefficient(beta[i], x_min, x_max, seed, kSaltBeta + i));
  for (std::size_t i = 0; i < beta_bar.size(); ++i)
    m.beta_bar.push_back(make_coefficient(beta_bar[i], x_min, x_max, seed, kSaltBetaBar + i));
  return m;
}

FieldSpec parse_field(const std::string& text) {
  const std::string t = trim(text);
  FieldSpec f;
  if (t == "zero") return f;
  if (t.rfind("random:", 0) == 0) {
    const auto amp = parse_number(t.substr(7));
    if (!amp || *amp < 0.0) throw DomainError("field '" + t + "': random:amp needs a non-negative amplitude");
    f.kind = FieldSpec::Kind::Random;
    f.amplitude = *amp;
    return f;
  }
  f.kind = FieldSpec::Kind::Profile;
  f.profile = parse_profile(t);
  if (f.profile.random()) throw DomainError("field '" + t + "': use random:amp for random fields");
  return f;
}

AdaptedField make_source(const FieldSpec& f, const ScenarioTree& tree, const Grid& grid, std::uint64_t seed) {
  const int M = tree.steps();
  switch (f.kind) {
    case FieldSpec::Kind::Zero:
      return {};
    case FieldSpec::Kind::Profile:
      return AdaptedField::constant_profile(0, M - 1, profile_on_grid(f.profile, grid));
    case FieldSpec::Kind::Random: {
      AdaptedField out = AdaptedField::zeros(tree, 0, M - 1, grid.size(), Measurability::Adapted);
      for (int t = 0; t < M; ++t) {
        RowMatrix& m = out.level(t);
        for (Eigen::Index n = 0; n < m.rows(); ++n)
          for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(n, j) = f.amplitude * signed_uniform(seed, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(n),
                                                   static_cast<std::uint64_t>(j));
      }
      return out;
    }
  }
  return {};
}

AdaptedField make_terminal(const FieldSpec& f, const ScenarioTree& tree, const Grid& grid, std::uint64_t seed) {
  const int M = tree.steps();
  switch (f.kind) {
    case FieldSpec::Kind::Zero:
      return {};
    case FieldSpec::Kind::Profile:
      return AdaptedField::deterministic_terminal(M, profile_on_grid(f.profile, grid));
    case FieldSpec::Kind::Random: {
      AdaptedField out = AdaptedField::zeros(tree, M, M, grid.size(), Measurability::Adapted);
      RowMatrix& m = out.level(M);
      for (Eigen::Index n = 0; n < m.rows(); ++n)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
          m(n, j) = f.amplitude * signed_uniform(seed, static_cast<std::uint64_t>(M), static_cast<std::uint64_t>(n),
                                                 static_cast<std::uint64_t>(j));
      return out;
    }
  }
  return {};
}

NonlocalCondition parse_condition(const std::string& text) {
  // split on '+' except inside exponents such as 1e+3
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == '+' && !(cur.size() >= 2 && (cur.back() == 'e' || cur.back() == 'E') &&
                      std::isdigit(static_cast<unsigned char>(cur[cur.size() - 2])))) {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(trim(cur));

  NonlocalCondition cond;
  PointTimes points;
  for (const auto& part : parts) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw DomainError("condition term '" + part + "' must look like name:parameters");
    const std::string name = trim(part.substr(0, colon));
    const std::string arg = trim(part.substr(colon + 1));
    if (name == "initial") {
      const auto k = parse_number(arg);
      if (!k) throw DomainError("condition term '" + part + "': kappa is not a number");
      cond.terms.push_back(ScaledInitial{*k});
    } else if (name == "point") {
      const auto at = arg.find('@');
      if (at == std::string::npos) throw DomainError("condition term '" + part + "' must be point:time@weight");
      const auto t = parse_number(arg.substr(0, at));
      const auto w = parse_number(arg.substr(at + 1));
      if (!t || !w) throw DomainError("condition term '" + part + "': time and weight must be numbers");
      points.points.push_back(PointTime{*t, *w, {}});
    } else if (name == "kernel") {
      const auto k0 = parse_number(arg);
      if (!k0) throw DomainError("condition term '" + part + "': kernel weight is not a number");
      const double v = *k0;
      cond.terms.push_back(TimeKernel{[v](double) { return v; }});
    } else {
      throw DomainError("unknown condition term '" + name + "' (expected initial, point or kernel)");
    }
  }
  if (!points.points.empty()) cond.terms.push_back(points);
  return cond;
}

std::vector<double> SweepSpec::eps_grid() const {
  std::vector<double> grid;
  if (eps_count == 1) return {eps_min};
  for (int k = 0; k < eps_count; ++k)
    grid.push_back((eps_min * (eps_count - 1 - k) + eps_max * k) / (eps_count - 1));
  return grid;
}

// ---------------------------------------------------------------------------

std::vector<Check> run_periodic(const PeriodicSpec& spec, const RunOptions& opts) {
  const ScenarioTree tree = spec.disc.tree();
  const Grid grid = spec.disc.grid();
  const CoefficientSet coeffs = discretize(spec.coeffs.model(grid.x_min(), grid.x_max(), spec.seed), tree, grid);
  const AdaptedField phi = make_source(spec.phi, tree, grid, instance_seed(spec.seed, kSaltPhi, 0));
  const AdaptedField xi = make_terminal(spec.xi, tree, grid, instance_seed(spec.seed, kSaltXi, 0));
  const NonlocalCondition cond = NonlocalCondition::scaled_initial(spec.kappa);

  const NonlocalSolution sol = solve_nonlocal(cond, phi, xi, tree, grid, coeffs, spec.method, nonlocal_options(opts));
  const int M = tree.steps();
  const Eigen::VectorXd u0 = sol.solution.u.at(0, 0);
  double worst = 0.0;
  for (NodeIndex leaf = 0; leaf < tree.leaf_count(); ++leaf) {
    Eigen::VectorXd r = sol.solution.u.at(M, leaf) - spec.kappa * u0;
    if (!xi.empty()) r -= xi.at(M, leaf);
    worst = std::max(worst, r.cwiseAbs().maxCoeff());
  }
  const NormReport norms = energy_norms(sol.solution, xi, phi);
  return {
      Check::at_most("boundary_residual", worst, spec.boundary_tol),
      Check::info("leaves", static_cast<double>(tree.leaf_count())),
      Check::info("integral_residual", sol.integral_residual),
      Check::info("condition_number", sol.condition_number),
      Check::info("reduced", sol.reduced ? 1.0 : 0.0),
      Check::info("coercivity_delta", check_coercivity(coeffs, grid).delta),
      Check::info("norm_u_Y1", norms.u_y1),
      Check::info("norm_ratio", norms.ratio),
  };
}

std::vector<Check> run_solve(const SolveSpec& spec, const RunOptions& opts) {
  const ScenarioTree tree = spec.disc.tree();
  const Grid grid = spec.disc.grid();
  const CoefficientSet coeffs = discretize(spec.coeffs.model(grid.x_min(), grid.x_max(), spec.seed), tree, grid);
  const NonlocalOptions nopts = nonlocal_options(opts);
  const int M = tree.steps();

  if (spec.mode == SolveSpec::Mode::RoundTrip) {
    double integral = 0.0, boundary = 0.0, agreement = 0.0, snap = 0.0;
    int reduced = 0;
    for (int k = 0; k < spec.instances; ++k) {
      const AdaptedField phi = make_source(spec.phi, tree, grid, instance_seed(spec.seed, kSaltPhi, k));
      const AdaptedField xi = make_terminal(spec.xi, tree, grid, instance_seed(spec.seed, kSaltXi, k));
      const NonlocalSolution sol = solve_nonlocal(spec.condition, phi, xi, tree, grid, coeffs, spec.method, nopts);
      reduced += sol.reduced ? 1 : 0;
      snap = std::max(snap, sol.snap_distance);

      // u = L_T phi + Lambda_T psi with psi the fixed point
      BSPDESolution formula = operator_Lambda(tree, grid, coeffs, M, sol.terminal, nopts.solver);
      if (!phi.empty()) {
        const BSPDESolution l = operator_L(tree, grid, coeffs, M, phi, nopts.solver);
        formula.u += l.u;
        for (std::size_t i = 0; i < formula.chi.size(); ++i) formula.chi[i] += l.chi[i];
      }
      integral = std::max(
          integral, integral_identity_residual(tree, grid, coeffs, formula.u, formula.chi, phi, M));
      const AdaptedField gamma = apply_gamma(spec.condition, formula, tree);
      for (NodeIndex leaf = 0; leaf < tree.leaf_count(); ++leaf) {
        Eigen::VectorXd r = formula.u.at(M, leaf) - gamma.at(M, leaf);
        if (!xi.empty()) r -= xi.at(M, leaf);
        boundary = std::max(boundary, r.cwiseAbs().maxCoeff());
      }
      agreement = std::max(agreement, max_abs_difference(formula.u, sol.solution.u));
    }
    return {
        Check::at_most("integral_identity_residual", integral, spec.integral_tol),
        Check::at_most("boundary_identity_residual", boundary, spec.boundary_tol),
        Check::info("formula_vs_solver_max_diff", agreement),
        Check::info("instances", spec.instances),
        Check::info("reduced_instances", reduced),
        Check::info("max_snap_distance", snap),
    };
  }

  double worst = 0.0;
  double empirical_c = 0.0;
  for (int k = 0; k < spec.instances; ++k) {
    const AdaptedField phi = make_source(spec.phi, tree, grid, instance_seed(spec.seed, kSaltPhi, k));
    const AdaptedField xi = make_terminal(spec.xi, tree, grid, instance_seed(spec.seed, kSaltXi, k));
    const AdaptedField phi_a = phi.empty() ? phi : spec.alpha * phi;
    const AdaptedField xi_a = xi.empty() ? xi : spec.alpha * xi;
    const NonlocalSolution s1 = solve_nonlocal(spec.condition, phi, xi, tree, grid, coeffs, spec.method, nopts);
    const NonlocalSolution s3 = solve_nonlocal(spec.condition, phi_a, xi_a, tree, grid, coeffs, spec.method, nopts);
    const NormReport n1 = energy_norms(s1.solution, xi, phi);
    const NormReport n3 = energy_norms(s3.solution, xi_a, phi_a);
    std::vector<std::pair<double, double>> pairs = {{n1.u_sup, n3.u_sup}, {n1.u_x1, n3.u_x1}, {n1.u_y1, n3.u_y1}};
    for (std::size_t i = 0; i < n1.chi_x0.size(); ++i) pairs.emplace_back(n1.chi_x0[i], n3.chi_x0[i]);
    for (const auto& [a, b] : pairs) {
      const double scale = std::max(std::abs(spec.alpha * a), std::numeric_limits<double>::min());
      worst = std::max(worst, std::abs(b - spec.alpha * a) / scale);
    }
    empirical_c = std::max(empirical_c, n1.ratio);
  }
  return {
      Check::at_most("norm_scaling_rel_error", worst, spec.linearity_tol),
      Check::equals("empirical_C_finite", std::isfinite(empirical_c) ? 1.0 : 0.0, 1.0),
      Check::info("empirical_C", empirical_c),
      Check::info("instances", spec.instances),
  };
}

std::vector<Check> run_spectrum(const SpectrumSpec& spec, const RunOptions& opts) {
  const ScenarioTree tree = spec.disc.tree();
  const Grid grid = spec.disc.grid();
  const CoefficientSet coeffs = discretize(spec.coeffs.model(grid.x_min(), grid.x_max(), spec.seed), tree, grid);
  const NonlocalOptions nopts = nonlocal_options(opts);
  const AdaptedField phi = make_source(spec.phi, tree, grid, instance_seed(spec.seed, kSaltPhi, 0));
  const AdaptedField xi = make_terminal(spec.xi, tree, grid, instance_seed(spec.seed, kSaltXi, 0));

  NonlocalCondition cond = spec.condition;
  double kappa = std::numeric_limits<double>::quiet_NaN();
  if (spec.target_radius) {
    const Rescaled r = rescale_initial(cond, *spec.target_radius, tree, grid, coeffs, phi, xi, nopts, true);
    cond = r.condition;
    kappa = r.kappa;
  }
  const bool reduced = reduction_applies(cond, tree, grid, coeffs, phi, xi);
  const QOperator q = assemble_Q(cond, tree, grid, coeffs, reduced, nopts);
  const SpectrumReport sr = spectrum(q, nopts);
  const double cond_number =
      condition_number(Eigen::MatrixXd::Identity(q.matrix.rows(), q.matrix.cols()) - q.matrix, nopts.spectrum_budget);

  std::vector<Check> checks = {
      Check::at_most("spectral_radius", sr.spectral_radius, spec.radius_max),
      Check::info("distance_to_one", sr.distance_to_one),
      Check::info("condition_number", cond_number),
      Check::info("dimension", static_cast<double>(q.dimension())),
      Check::info("reduced", reduced ? 1.0 : 0.0),
  };
  if (spec.target_radius) checks.push_back(Check::info("kappa", kappa));

  const NonlocalSolution direct = solve_nonlocal(q, cond, phi, xi, tree, grid, coeffs, SolveMethod::Direct, nopts);
  const NonlocalSolution neumann = solve_nonlocal(q, cond, phi, xi, tree, grid, coeffs, SolveMethod::Neumann, nopts);
  const double diff = max_abs_difference(direct.solution.u, neumann.solution.u);
  const double ratio = neumann.predicted_iterations > 0.0 ? neumann.iterations / neumann.predicted_iterations
                                                           : std::numeric_limits<double>::infinity();
  const double spread = ratio > 0.0 ? std::max(ratio, 1.0 / ratio) : std::numeric_limits<double>::infinity();
  checks.push_back(Check::at_most("neumann_vs_direct", diff, spec.agreement_tol));
  checks.push_back(Check::at_most("iteration_count_factor", spread, spec.iteration_factor));
  checks.push_back(Check::info("neumann_iterations", neumann.iterations));
  checks.push_back(Check::info("predicted_iterations", neumann.predicted_iterations));
  checks.push_back(Check::info("contraction_factor", neumann.contraction_factor));
  checks.push_back(Check::info("boundary_residual_direct", direct.boundary_residual));
  return checks;
}

std::vector<Check> run_duality(const DualitySpec& spec, const RunOptions&) {
  const ScenarioTree tree = spec.disc.tree();
  const Grid grid = spec.disc.grid();
  const CoefficientSet coeffs = discretize(spec.coeffs.model(grid.x_min(), grid.x_max(), spec.seed), tree, grid);
  const int J = grid.size();

  if (spec.mode == DualitySpec::Mode::Pairing) {
    double worst = 0.0;
    double worst_rel = 0.0;
    double smallest = std::numeric_limits<double>::infinity();
    // a smooth bump plus node-wise noise keeps the pairing O(1) after smoothing
    const FieldSpec noise{FieldSpec::Kind::Random, {}, 0.5};
    const Eigen::RowVectorXd bump = profile_on_grid({Profile::Kind::Sine, 1.0, 0.0}, grid).transpose();
    for (int k = 0; k < spec.pairs; ++k) {
      const std::uint64_t s = instance_seed(spec.seed, kSaltRho, k);
      Eigen::VectorXd rho(J);
      for (int j = 0; j < J; ++j) rho(j) = 1.0 + 0.5 * signed_uniform(s, 0, static_cast<std::uint64_t>(j), 0);
      AdaptedField Phi = make_terminal(noise, tree, grid, instance_seed(spec.seed, kSaltTerminal, k));
      Phi.level(tree.steps()).rowwise() += bump;
      const DualityReport r = duality_check(tree, grid, coeffs, spec.kappa, rho, Phi);
      worst = std::max(worst, r.gap);
      worst_rel = std::max(worst_rel, r.gap / std::abs(r.lhs));
      smallest = std::min(smallest, std::abs(r.lhs));
    }
    return {
        Check::at_most("duality_gap", worst, spec.gap_tol),
        Check::info("duality_gap_relative", worst_rel),
        Check::info("min_abs_pairing", smallest),
        Check::info("pairs", spec.pairs),
    };
  }

  Eigen::VectorXd rho = Eigen::VectorXd::Zero(J);
  if (spec.rho == "uniform") {
    rho.setConstant(1.0);
  } else if (spec.rho == "random") {
    for (int j = 0; j < J; ++j) rho(j) = keyed_uniform(instance_seed(spec.seed, kSaltRho, 0), static_cast<std::uint64_t>(j));
  } else if (spec.rho.rfind("point:", 0) == 0) {
    const auto a = parse_number(spec.rho.substr(6));
    if (!a) throw DomainError("rho: point:a needs a number");
    const int j = std::clamp(static_cast<int>(std::lround((*a - grid.x_min()) / grid.h())) - 1, 0, J - 1);
    rho(j) = 1.0;
  } else {
    throw DomainError("rho must be uniform, random or point:a");
  }
  rho /= grid.h() * rho.sum();

  const double nu1 = nu1_bound(coeffs, tree.horizon());
  const MassReport r = mass_contraction_check(tree, grid, coeffs, rho, nu1, spec.mass_tol);
  bool beta_bar_zero = true;
  for (const auto& bb : coeffs.beta_bar) beta_bar_zero = beta_bar_zero && bb.max_abs() == 0.0;
  return {
      Check::at_most("final_mass", r.final_mass, nu1 + spec.mass_tol),
      Check::info("nu1", nu1),
      Check::info("mass_non_increasing", r.non_increasing ? 1.0 : 0.0),
      Check::info("positivity_ok", r.positivity_ok ? 1.0 : 0.0),
      Check::info("beta_bar_zero", beta_bar_zero ? 1.0 : 0.0),
  };
}

namespace {

bool canonical_brownian(const CoefficientSpec& c) {
  auto zero = [](const Profile& p) { return p.kind == Profile::Kind::Constant && p.c == 0.0; };
  bool ok = c.b.kind == Profile::Kind::Constant && c.b.c > 0.0 && zero(c.drift);
  for (std::size_t i = 0; i < c.beta.size(); ++i) ok = ok && (zero(c.beta[i]) || zero(c.beta_bar[i]));
  return ok;
}

bool constant_killing_no_beta_bar(const CoefficientSpec& c) {
  bool ok = c.killing.kind == Profile::Kind::Constant;
  for (const auto& p : c.beta_bar) ok = ok && p.kind == Profile::Kind::Constant && p.c == 0.0;
  return ok;
}

double series_oracle(const McSpec& spec) {
  const double sigma2 = 2.0 * spec.coeffs.b.c;
  if (const auto* p = std::get_if<PointStart>(&spec.start))
    return reference::survival_series(p->a, spec.domain.x_min, spec.domain.x_max, sigma2, spec.mc.horizon);
  return reference::uniform_survival_series(spec.domain.x_min, spec.domain.x_max, sigma2, spec.mc.horizon);
}

void dump_paths(const PathEnsemble& ens, const std::string& id, const RunOptions& opts) {
  if (opts.dump_dir.empty()) return;
  const std::filesystem::path dir(opts.dump_dir);
  const std::filesystem::path final_path = dir / (id + ".paths.bin");
  const std::filesystem::path tmp = dir / (id + ".paths.bin.tmp");
  write_path_dump(ens, tmp.string());
  std::filesystem::rename(tmp, final_path);
}

}  // namespace

std::vector<Check> run_mc(const McSpec& spec, const std::string& id, const RunOptions& opts) {
  if (spec.mode == McSpec::Mode::Nu2) {
    const Nu2Report r = evaluate_nu2(spec.q, spec.nu, spec.beta_bar_integral);
    std::vector<Check> checks = {
        Check::equals("smallb_verdict", r.condition_iii ? 1.0 : 0.0, spec.expect_smallb ? 1.0 : 0.0),
        Check::info("nu2", r.nu2),
        Check::info("smallb_lhs", r.smallb_lhs),
        Check::info("best_q", r.best_q),
        Check::info("best_nu2", r.best_nu2),
    };
    if (spec.nu2_expected) checks.push_back(Check::at_most("nu2_abs_error", std::abs(r.nu2 - *spec.nu2_expected), spec.nu2_tol));
    return checks;
  }

  McOptions mc = spec.mc;
  mc.threads = opts.threads;
  const CoefficientModel model = spec.coeffs.model(spec.domain.x_min, spec.domain.x_max, mc.seed);
  const PathEnsemble ens = simulate_paths(model, spec.domain, spec.start, mc);
  dump_paths(ens, id, opts);
  const WeightedEstimate mart = martingale_mean(ens);

  if (spec.mode == McSpec::Mode::ExitBound) {
    const WeightedEstimate e = estimate_exit_bound(ens);
    std::vector<Check> checks = {
        Check::info("survival_mc", e.estimate),
        Check::info("std_error", e.std_error),
        Check::info("wilson_low", e.ci_low),
        Check::info("wilson_high", e.ci_high),
        Check::info("gamma_M_mean", mart.estimate),
    };
    if (canonical_brownian(spec.coeffs)) {
      const double oracle = series_oracle(spec);
      checks.insert(checks.begin(), Check::at_most("z_score_vs_series", std::abs(e.estimate - oracle) / e.std_error, spec.z_max));
      checks.push_back(Check::info("survival_series", oracle));
    }
    return checks;
  }

  // Feynman-Kac: <p(T), Phi> on a collapsed tree against the weighted Monte Carlo mean.
  const auto* point = std::get_if<PointStart>(&spec.start);
  if (!point) throw DomainError("feynman_kac needs a point start");
  const ScenarioTree tree = ScenarioTree::collapsed(spec.tree_M, spec.coeffs.beta.size() ? static_cast<int>(spec.coeffs.beta.size()) : 1,
                                                    mc.horizon);
  const Grid grid(spec.domain.x_min, spec.domain.x_max, spec.tree_J);
  const CoefficientSet coeffs = discretize(model, tree, grid);
  const int j = static_cast<int>(std::lround((point->a - grid.x_min()) / grid.h())) - 1;
  if (j < 0 || j >= grid.size() || std::abs(grid.x(j) - point->a) > 1e-9 * grid.length())
    throw DomainError("feynman_kac: the start point must be a grid point of the tree grid");
  Eigen::VectorXd rho = Eigen::VectorXd::Zero(grid.size());
  rho(j) = 1.0 / grid.h();
  const DualDensity dual = solve_forward_dual(tree, grid, coeffs, 0, rho);
  const Profile terminal = spec.terminal;
  const AdaptedField Phi = AdaptedField::deterministic_terminal(tree.steps(), profile_on_grid(terminal, grid));
  const double tree_value = expected_pairing(dual, Phi, grid.h());

  const auto phi_fn = [&](double x) {
    return terminal.kind == Profile::Kind::Sine ? terminal.c + terminal.a * sine_bump(x, grid.x_min(), grid.x_max())
                                                : terminal.c;
  };
  const WeightedEstimate e = feynman_kac_estimate(ens, phi_fn);
  auto pair_tol = [&](double a, double b) {
    return std::max(spec.z_max * e.std_error, spec.disc_tol * std::max(std::abs(a), std::abs(b)));
  };
  std::vector<Check> checks = {
      Check::at_most("tree_vs_mc", std::abs(tree_value - e.estimate), pair_tol(tree_value, e.estimate)),
  };
  if (canonical_brownian(spec.coeffs) && constant_killing_no_beta_bar(spec.coeffs) &&
      terminal.kind == Profile::Kind::Constant) {
    const double oracle = terminal.c * std::exp(-spec.coeffs.killing.c * mc.horizon) * series_oracle(spec);
    checks.push_back(Check::at_most("tree_vs_oracle", std::abs(tree_value - oracle), pair_tol(tree_value, oracle)));
    checks.push_back(Check::at_most("mc_vs_oracle", std::abs(e.estimate - oracle), pair_tol(e.estimate, oracle)));
    checks.push_back(Check::info("oracle", oracle));
  }
  checks.push_back(Check::info("tree_value", tree_value));
  checks.push_back(Check::info("mc_value", e.estimate));
  checks.push_back(Check::info("mc_std_error", e.std_error));
  checks.push_back(Check::info("gamma_M_mean", mart.estimate));
  return checks;
}

SweepTable sweep_table(const SweepSpec& spec, const RunOptions& opts) {
  const ScenarioTree tree = spec.disc.tree();
  const Grid grid = spec.disc.grid();
  const CoefficientSet coeffs = discretize(spec.coeffs.model(grid.x_min(), grid.x_max(), spec.seed), tree, grid);
  const AdaptedField phi = make_source(spec.phi, tree, grid, instance_seed(spec.seed, kSaltPhi, 0));
  const AdaptedField xi = make_terminal(spec.xi, tree, grid, instance_seed(spec.seed, kSaltXi, 0));
  SweepOptions so;
  so.flag_tol = spec.flag_tol;
  so.nonlocal = nonlocal_options(opts);

  SweepTable table;
  NonlocalCondition cond = spec.condition;
  if (spec.target_eigenvalue) {
    const Rescaled r = rescale_initial(cond, *spec.target_eigenvalue, tree, grid, coeffs, phi, xi, so.nonlocal, false);
    cond = r.condition;
    table.kappa = r.kappa;
    table.dominant_eigenvalue = *spec.target_eigenvalue;
  }
  table.rows = sweep_epsilon(cond, spec.eps_grid(), phi, xi, tree, grid, coeffs, so);
  return table;
}

std::vector<Check> run_sweep(const SweepSpec& spec, const RunOptions& opts) {
  const SweepTable table = sweep_table(spec, opts);
  int flagged = 0, unsolved = 0, mismatched = 0, near_singular_mismatch = 0;
  double residual = 0.0;
  for (const auto& row : table.rows) {
    flagged += row.flagged ? 1 : 0;
    if (!row.flagged && !(row.solved && row.solvable)) ++unsolved;
    if (row.solved && row.solvable) residual = std::max(residual, row.boundary_residual);
    if (row.near_singular != row.flagged) ++near_singular_mismatch;
    if (spec.target_eigenvalue) {
      const bool expected = std::abs(1.0 / (1.0 + row.eps) - *spec.target_eigenvalue) <= spec.flag_tol;
      if (expected != row.flagged) ++mismatched;
    }
  }
  std::vector<Check> checks;
  if (spec.target_eigenvalue) {
    checks.push_back(Check::equals("flag_mismatches", mismatched, 0.0));
    checks.push_back(Check::at_least("flagged_rows", flagged, 1.0));
    checks.push_back(Check::equals("near_singular_mismatches", near_singular_mismatch, 0.0));
    checks.push_back(Check::info("kappa", table.kappa));
  } else {
    checks.push_back(Check::equals("flagged_rows", flagged, 0.0));
  }
  checks.push_back(Check::equals("unsolved_unflagged_rows", unsolved, 0.0));
  checks.push_back(Check::info("max_boundary_residual", residual));
  checks.push_back(Check::info("rows", static_cast<double>(table.rows.size())));
  return checks;
}

namespace {

Eigen::VectorXd heat_solution(const ConvergenceSpec& spec, int J, int M) {
  const ScenarioTree tree = ScenarioTree::collapsed(M, 1, spec.horizon);
  const Grid grid(spec.x_min, spec.x_max, J);
  CoefficientModel model;
  model.form = OperatorForm::NonDivergence;
  model.b = CoefficientFn::constant(spec.b);
  model.beta = {CoefficientFn::constant(0.0)};
  model.beta_bar = {CoefficientFn::constant(0.0)};
  const CoefficientSet coeffs = discretize(model, tree, grid);
  const AdaptedField Phi =
      AdaptedField::deterministic_terminal(M, grid.sample([&](double x) { return sine_bump(x, spec.x_min, spec.x_max); }));
  return solve_cauchy_backward(tree, grid, coeffs, M, Phi, AdaptedField{}).u.at(0, 0);
}

double observed_order(const std::vector<double>& diffs) {
  double order = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < diffs.size(); ++k) order = std::min(order, std::log2(diffs[k] / diffs[k + 1]));
  return order;
}

}  // namespace

std::vector<Check> run_convergence(const ConvergenceSpec& spec, const RunOptions&) {
  if (spec.levels < 3) throw DomainError("convergence needs at least three refinement levels");
  const double L = spec.x_max - spec.x_min;
  const double decay = std::exp(-spec.b * kPi * kPi * spec.horizon / (L * L));

  const Grid ref_grid(spec.x_min, spec.x_max, spec.reference_J);
  const Eigen::VectorXd exact = decay * ref_grid.sample([&](double x) { return sine_bump(x, spec.x_min, spec.x_max); });
  const Eigen::VectorXd numeric = heat_solution(spec, spec.reference_J, spec.reference_M);
  const double rel = std::sqrt(ref_grid.inner(numeric - exact, numeric - exact) / ref_grid.inner(exact, exact));

  std::vector<Eigen::VectorXd> temporal;
  for (int k = 0; k < spec.levels; ++k) temporal.push_back(heat_solution(spec, spec.temporal_J, spec.temporal_base_M << k));
  const Grid tgrid(spec.x_min, spec.x_max, spec.temporal_J);
  std::vector<double> tdiff;
  for (int k = 0; k + 1 < spec.levels; ++k) {
    const Eigen::VectorXd d = temporal[k] - temporal[k + 1];
    tdiff.push_back(std::sqrt(tgrid.inner(d, d)));
  }

  std::vector<Eigen::VectorXd> spatial;
  for (int k = 0; k < spec.levels; ++k) spatial.push_back(heat_solution(spec, (spec.spatial_base_cells << k) - 1, spec.spatial_M));
  std::vector<double> sdiff;
  for (int k = 0; k + 1 < spec.levels; ++k) {
    const Grid coarse(spec.x_min, spec.x_max, static_cast<int>(spatial[k].size()));
    Eigen::VectorXd d(spatial[k].size());
    // coarse point j sits at fine index 2j + 1
    for (Eigen::Index j = 0; j < d.size(); ++j) d(j) = spatial[k](j) - spatial[k + 1](2 * j + 1);
    sdiff.push_back(std::sqrt(coarse.inner(d, d)));
  }

  return {
      Check::at_most("analytic_rel_L2_error", rel, spec.analytic_tol),
      Check::at_least("temporal_order", observed_order(tdiff), spec.temporal_order_min),
      Check::at_least("spatial_order", observed_order(sdiff), spec.spatial_order_min),
      Check::info("temporal_finest_diff", tdiff.back()),
      Check::info("spatial_finest_diff", sdiff.back()),
  };
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {"solve",     "spectrum", "duality",    "mc-verify",
                                                 "sweep-eps", "periodic", "convergence"};
  return kinds;
}

namespace {

template <class F>
auto guarded(const ConfigSection& s, const std::string& key, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    s.fail(key, e.what());
  }
}

Discretization parse_disc(const ConfigSection& s) {
  Discretization d;
  d.x_min = s.require_double("x_min");
  d.x_max = s.require_double("x_max");
  if (!(d.x_max > d.x_min)) s.fail("x_max", "must exceed x_min");
  d.horizon = s.require_double("T");
  if (!(d.horizon > 0.0)) s.fail("T", "must be positive");
  d.J = static_cast<int>(s.require_int("J"));
  if (d.J < 3) s.fail("J", "needs at least 3 interior points");
  d.M = static_cast<int>(s.require_int("M"));
  if (d.M < 1) s.fail("M", "needs at least one time step");
  d.N = static_cast<int>(s.require_int("N"));
  if (d.N < 1 || d.N > 3) s.fail("N", "must be 1, 2 or 3");
  d.node_budget = s.get_int("node_budget", d.node_budget);
  if (d.node_budget < 1) s.fail("node_budget", "must be positive");
  const double leaves = std::pow(std::pow(2.0, d.N), d.M);
  if (leaves > static_cast<double>(d.node_budget))
    s.fail("M", "(2^N)^M = " + std::to_string(leaves) + " leaves exceeds node_budget " + std::to_string(d.node_budget));
  return d;
}

Profile profile_key(const ConfigSection& s, const std::string& key) {
  return guarded(s, key, [&] { return parse_profile(s.require_string(key)); });
}

CoefficientSpec parse_coeffs(const ConfigSection& s, int N) {
  CoefficientSpec c;
  const std::string form = s.require_string("form");
  if (form == "nondivergence") {
    c.form = OperatorForm::NonDivergence;
  } else if (form == "divergence") {
    c.form = OperatorForm::Divergence;
  } else {
    s.fail("form", "expected nondivergence or divergence, got '" + form + "'");
  }
  c.b = profile_key(s, "b");
  c.drift = profile_key(s, "drift");
  c.killing = profile_key(s, "killing");
  for (const std::string key : {"beta", "beta_bar"}) {
    const auto items = split(s.require_string(key), ';');
    if (static_cast<int>(items.size()) != N)
      s.fail(key, "needs N = " + std::to_string(N) + " profiles separated by ';', got " + std::to_string(items.size()));
    auto& out = key == std::string("beta") ? c.beta : c.beta_bar;
    for (const auto& item : items) out.push_back(guarded(s, key, [&] { return parse_profile(item); }));
  }
  return c;
}

FieldSpec field_key(const ConfigSection& s, const std::string& key) {
  return guarded(s, key, [&] { return parse_field(s.require_string(key)); });
}

NonlocalCondition condition_key(const ConfigSection& s) {
  return guarded(s, "condition", [&] { return parse_condition(s.require_string("condition")); });
}

std::uint64_t seed_key(const ConfigSection& s) {
  const long long v = s.require_int("seed");
  if (v < 0) s.fail("seed", "must be non-negative");
  return static_cast<std::uint64_t>(v);
}

SolveMethod method_key(const ConfigSection& s) {
  const std::string m = s.get_string("method", "direct");
  if (m == "direct") return SolveMethod::Direct;
  if (m == "neumann") return SolveMethod::Neumann;
  s.fail("method", "expected direct or neumann, got '" + m + "'");
}

double tolerance_key(const ConfigSection& s, const std::string& key, double fallback) {
  const double v = s.get_double(key, fallback);
  if (!(v > 0.0)) s.fail(key, "tolerances must be positive");
  return v;
}

int positive_int(const ConfigSection& s, const std::string& key) {
  const long long v = s.require_int(key);
  if (v < 1) s.fail(key, "must be at least 1");
  return static_cast<int>(v);
}

/// Random inputs on trees with N >= 2 produce child values outside the span
/// of the increments, which the representation step rejects.
void require_representable(const ConfigSection& s, const Discretization& d, const CoefficientSpec& c,
                           std::initializer_list<std::pair<const char*, const FieldSpec*>> fields) {
  if (d.N == 1) return;
  if (c.random()) s.fail("N", "random coefficient profiles need N = 1");
  for (const auto& [key, f] : fields)
    if (f->kind == FieldSpec::Kind::Random) s.fail(key, "random fields need N = 1");
}

std::string mode_key(const ConfigSection& s, std::initializer_list<const char*> allowed) {
  const std::string m = s.require_string("check");
  for (const char* a : allowed)
    if (m == a) return m;
  std::string list;
  for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
  s.fail("check", "expected one of " + list + ", got '" + m + "'");
}

}  // namespace

PreparedExperiment prepare_experiment(const ConfigSection& original, std::optional<std::uint64_t> seed_override) {
  ConfigSection section = original;
  if (seed_override && section.has("seed")) {
    ConfigSection copy(original.id(), original.source(), original.line());
    for (const auto& [key, e] : original.entries())
      copy.set(key, key == "seed" ? std::to_string(*seed_override) : e.value, e.line);
    section = copy;
  }
  const ConfigSection& s = section;

  PreparedExperiment out;
  out.id = s.id();
  out.kind = s.require_string("kind");
  out.config_hash = hash_hex(s.hash());
  const std::string id = out.id;

  if (out.kind == "periodic") {
    PeriodicSpec p;
    p.disc = parse_disc(s);
    p.coeffs = parse_coeffs(s, p.disc.N);
    p.kappa = s.require_double("kappa");
    p.phi = field_key(s, "phi");
    p.xi = field_key(s, "xi");
    p.seed = seed_key(s);
    p.method = method_key(s);
    p.boundary_tol = tolerance_key(s, "boundary_tol", p.boundary_tol);
    require_representable(s, p.disc, p.coeffs, {{"phi", &p.phi}, {"xi", &p.xi}});
    out.run = [p](const RunOptions& o) { return run_periodic(p, o); };
  } else if (out.kind == "solve") {
    SolveSpec p;
    p.mode = mode_key(s, {"round_trip", "linearity"}) == "round_trip" ? SolveSpec::Mode::RoundTrip
                                                                        : SolveSpec::Mode::Linearity;
    p.disc = parse_disc(s);
    p.coeffs = parse_coeffs(s, p.disc.N);
    p.condition = condition_key(s);
    p.phi = field_key(s, "phi");
    p.xi = field_key(s, "xi");
    p.seed = seed_key(s);
    p.instances = positive_int(s, "instances");
    p.method = method_key(s);
    if (p.mode == SolveSpec::Mode::RoundTrip) {
      p.integral_tol = tolerance_key(s, "integral_tol", p.integral_tol);
      p.boundary_tol = tolerance_key(s, "boundary_tol", p.boundary_tol);
    } else {
      p.alpha = s.require_double("alpha");
      if (p.alpha == 0.0) s.fail("alpha", "must be non-zero");
      p.linearity_tol = tolerance_key(s, "linearity_tol", p.linearity_tol);
    }
    require_representable(s, p.disc, p.coeffs, {{"phi", &p.phi}, {"xi", &p.xi}});
    out.run = [p](const RunOptions& o) { return run_solve(p, o); };
  } else if (out.kind == "spectrum") {
    SpectrumSpec p;
    p.disc = parse_disc(s);
    p.coeffs = parse_coeffs(s, p.disc.N);
    p.condition = condition_key(s);
    p.target_radius = s.optional_double("target_radius");
    if (p.target_radius && !(*p.target_radius > 0.0 && *p.target_radius < 1.0))
      s.fail("target_radius", "must lie in (0, 1)");
    p.phi = field_key(s, "phi");
    p.xi = field_key(s, "xi");
    p.seed = seed_key(s);
    p.radius_max = tolerance_key(s, "radius_max", p.radius_max);
    p.agreement_tol = tolerance_key(s, "agreement_tol", p.agreement_tol);
    p.iteration_factor = tolerance_key(s, "iteration_factor", p.iteration_factor);
    require_representable(s, p.disc, p.coeffs, {{"phi", &p.phi}, {"xi", &p.xi}});
    out.run = [p](const RunOptions& o) { return run_spectrum(p, o); };
  } else if (out.kind == "duality") {
    DualitySpec p;
    p.mode = mode_key(s, {"pairing", "mass"}) == "pairing" ? DualitySpec::Mode::Pairing : DualitySpec::Mode::Mass;
    p.disc = parse_disc(s);
    p.coeffs = parse_coeffs(s, p.disc.N);
    p.seed = seed_key(s);
    if (p.mode == DualitySpec::Mode::Pairing) {
      p.kappa = s.require_double("kappa");
      p.pairs = positive_int(s, "pairs");
      p.gap_tol = tolerance_key(s, "gap_tol", p.gap_tol);
      if (p.disc.N > 1) s.fail("N", "random pairings need N = 1");
    } else {
      p.rho = s.require_string("rho");
      if (p.rho != "uniform" && p.rho != "random" && !(p.rho.rfind("point:", 0) == 0 && parse_number(p.rho.substr(6))))
        s.fail("rho", "expected uniform, random or point:a");
      p.mass_tol = tolerance_key(s, "mass_tol", p.mass_tol);
    }
    if (p.coeffs.random() && p.disc.N > 1) s.fail("N", "random coefficient profiles need N = 1");
    out.run = [p](const RunOptions& o) { return run_duality(p, o); };
  } else if (out.kind == "mc-verify") {
    McSpec p;
    const std::string mode = mode_key(s, {"exit_bound", "feynman_kac", "nu2"});
    if (mode == "nu2") {
      p.mode = McSpec::Mode::Nu2;
      p.q = s.require_double("q");
      if (!(p.q > 1.0)) s.fail("q", "must exceed 1");
      p.nu = s.require_double("nu");
      if (!(p.nu > 0.0 && p.nu < 1.0)) s.fail("nu", "must lie in (0, 1)");
      p.beta_bar_integral = s.require_double("beta_bar_integral");
      if (p.beta_bar_integral < 0.0) s.fail("beta_bar_integral", "must be non-negative");
      const std::string expect = s.require_string("expect_smallb");
      if (expect != "pass" && expect != "fail") s.fail("expect_smallb", "expected pass or fail");
      p.expect_smallb = expect == "pass";
      p.nu2_expected = s.optional_double("nu2_expected");
      p.nu2_tol = tolerance_key(s, "nu2_tol", p.nu2_tol);
    } else {
      p.mode = mode == "exit_bound" ? McSpec::Mode::ExitBound : McSpec::Mode::FeynmanKac;
      p.domain.x_min = s.require_double("x_min");
      p.domain.x_max = s.require_double("x_max");
      if (!(p.domain.x_max > p.domain.x_min)) s.fail("x_max", "must exceed x_min");
      p.mc.horizon = s.require_double("T");
      if (!(p.mc.horizon > 0.0)) s.fail("T", "must be positive");
      const int N = static_cast<int>(s.require_int("N"));
      if (N < 1 || N > 3) s.fail("N", "must be 1, 2 or 3");
      p.coeffs = parse_coeffs(s, N);
      if (p.coeffs.random()) s.fail("b", "Monte Carlo needs deterministic coefficient profiles");
      if (p.coeffs.form != OperatorForm::NonDivergence) s.fail("form", "Monte Carlo needs the nondivergence form");
      const std::string start = s.require_string("start");
      if (start == "uniform") {
        p.start = UniformStart{};
      } else if (start.rfind("point:", 0) == 0 && parse_number(start.substr(6))) {
        p.start = PointStart{*parse_number(start.substr(6))};
      } else {
        s.fail("start", "expected uniform or point:a");
      }
      p.mc.n_paths = s.require_int("n_paths");
      if (p.mc.n_paths < 2) s.fail("n_paths", "needs at least 2 paths");
      p.mc.dt = s.require_double("dt_mc");
      if (!(p.mc.dt > 0.0 && p.mc.dt <= p.mc.horizon)) s.fail("dt_mc", "must lie in (0, T]");
      p.mc.seed = seed_key(s);
      const std::string bridge = s.get_string("bridge_exit", "true");
      if (bridge != "true" && bridge != "false") s.fail("bridge_exit", "expected true or false");
      p.mc.bridge_exit = bridge == "true";
      p.z_max = tolerance_key(s, "z_max", p.z_max);
      if (p.mode == McSpec::Mode::FeynmanKac) {
        p.terminal = profile_key(s, "terminal");
        if (p.terminal.random()) s.fail("terminal", "must be deterministic");
        p.tree_J = static_cast<int>(s.require_int("J"));
        if (p.tree_J < 3) s.fail("J", "needs at least 3 interior points");
        p.tree_M = positive_int(s, "M");
        p.disc_tol = tolerance_key(s, "disc_tol", p.disc_tol);
        if (!std::holds_alternative<PointStart>(p.start)) s.fail("start", "feynman_kac needs point:a");
      }
    }
    out.run = [p, id](const RunOptions& o) { return run_mc(p, id, o); };
  } else if (out.kind == "sweep-eps") {
    SweepSpec p;
    p.disc = parse_disc(s);
    p.coeffs = parse_coeffs(s, p.disc.N);
    p.condition = condition_key(s);
    p.phi = field_key(s, "phi");
    p.xi = field_key(s, "xi");
    p.seed = seed_key(s);
    p.eps_min = s.require_double("eps_min");
    p.eps_max = s.require_double("eps_max");
    if (!(p.eps_min > -1.0) || !(p.eps_max >= p.eps_min)) s.fail("eps_max", "need -1 < eps_min <= eps_max");
    p.eps_count = positive_int(s, "eps_count");
    p.flag_tol = tolerance_key(s, "flag_tol", p.flag_tol);
    p.target_eigenvalue = s.optional_double("target_eigenvalue");
    if (p.target_eigenvalue && !(*p.target_eigenvalue > 0.0)) s.fail("target_eigenvalue", "must be positive");
    require_representable(s, p.disc, p.coeffs, {{"phi", &p.phi}, {"xi", &p.xi}});
    out.run = [p](const RunOptions& o) { return run_sweep(p, o); };
  } else if (out.kind == "convergence") {
    ConvergenceSpec p;
    p.x_min = s.require_double("x_min");
    p.x_max = s.require_double("x_max");
    if (!(p.x_max > p.x_min)) s.fail("x_max", "must exceed x_min");
    p.horizon = s.require_double("T");
    if (!(p.horizon > 0.0)) s.fail("T", "must be positive");
    p.b = s.require_double("b");
    if (!(p.b > 0.0)) s.fail("b", "must be positive");
    p.levels = positive_int(s, "levels");
    if (p.levels < 3) s.fail("levels", "needs at least 3 refinement levels");
    p.spatial_base_cells = positive_int(s, "spatial_base_cells");
    if (p.spatial_base_cells < 4) s.fail("spatial_base_cells", "needs at least 4 cells");
    p.spatial_M = positive_int(s, "spatial_M");
    p.temporal_base_M = positive_int(s, "temporal_base_M");
    p.temporal_J = positive_int(s, "temporal_J");
    p.reference_J = positive_int(s, "reference_J");
    p.reference_M = positive_int(s, "reference_M");
    if (p.temporal_J < 3 || p.reference_J < 3) s.fail("temporal_J", "grids need at least 3 interior points");
    p.analytic_tol = tolerance_key(s, "analytic_tol", p.analytic_tol);
    p.temporal_order_min = tolerance_key(s, "temporal_order_min", p.temporal_order_min);
    p.spatial_order_min = tolerance_key(s, "spatial_order_min", p.spatial_order_min);
    out.run = [p](const RunOptions& o) { return run_convergence(p, o); };
  } else {
    std::string list;
    for (const auto& k : experiment_kinds()) list += (list.empty() ? "" : ", ") + k;
    s.fail("kind", "unknown kind '" + out.kind + "' (expected one of " + list + ")");
  }
  s.reject_unused();
  return out;
}

bool ExperimentResult::passed() const {
  if (!error.empty()) return false;
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

ExperimentResult run_experiment(const PreparedExperiment& exp, const RunOptions& opts) {
  ExperimentResult r;
  r.id = exp.id;
  r.kind = exp.kind;
  r.config_hash = exp.config_hash;
  const auto start = std::chrono::steady_clock::now();
  try {
    r.checks = exp.run(opts);
  } catch (const Error& e) {
    r.error = e.what();
    r.checks.push_back(Check{"error", 1.0, Relation::Equal, 0.0, false});
  }
  r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace bspde
