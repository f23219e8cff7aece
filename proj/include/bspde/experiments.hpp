#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bspde/config.hpp"
#include "bspde/dual_forward.hpp"
#include "bspde/mc_diffusion.hpp"
#include "bspde/nonlocal.hpp"

namespace bspde {

enum class Relation { LessEqual, GreaterEqual, Equal, Info };

/// One named quantity produced by an experiment, optionally compared with a threshold.
struct Check {
  std::string name;
  double value = 0.0;
  Relation relation = Relation::Info;
  double threshold = 0.0;
  bool pass = true;

  static Check info(std::string name, double value);
  static Check at_most(std::string name, double value, double threshold);
  static Check at_least(std::string name, double value, double threshold);
  static Check equals(std::string name, double value, double expected);
};

const char* relation_symbol(Relation r);

struct RunOptions {
  int threads = 1;
  /// directory for binary path dumps; empty disables them
  std::string dump_dir;
};

/// Coefficient and field presets. Profiles are functions of x on the domain:
///   const:v          v
///   sine:a,c         c + a sin(pi (x - x_min) / L)
///   random:a,c       c + a U,  U uniform on [-1, 1] keyed by (seed, level, node)
///   random_sine:a,c  (c + a U) sin(pi (x - x_min) / L)
struct Profile {
  enum class Kind { Constant, Sine, Random, RandomSine };
  Kind kind = Kind::Constant;
  double a = 0.0;
  double c = 0.0;

  static Profile constant(double v) { return {Kind::Constant, 0.0, v}; }
  bool random() const { return kind == Kind::Random || kind == Kind::RandomSine; }
};

Profile parse_profile(const std::string& text);
CoefficientFn make_coefficient(const Profile& p, double x_min, double x_max, std::uint64_t seed, std::uint64_t salt);

struct Discretization {
  double x_min = 0.0;
  double x_max = 1.0;
  double horizon = 1.0;
  int J = 16;
  int M = 4;
  int N = 1;
  NodeIndex node_budget = NodeIndex{1} << 20;

  Grid grid() const { return {x_min, x_max, J}; }
  ScenarioTree tree() const;
};

struct CoefficientSpec {
  OperatorForm form = OperatorForm::NonDivergence;
  Profile b = Profile::constant(1.0);
  Profile drift = Profile::constant(0.0);
  Profile killing = Profile::constant(0.0);
  std::vector<Profile> beta;
  std::vector<Profile> beta_bar;

  bool random() const;
  CoefficientModel model(double x_min, double x_max, std::uint64_t seed) const;
};

/// Source phi or terminal field xi:
///   zero | const:v | sine:a,c | random:amp (independent uniform values on [-amp, amp] per node and point)
struct FieldSpec {
  enum class Kind { Zero, Profile, Random };
  Kind kind = Kind::Zero;
  Profile profile;
  double amplitude = 0.0;
};

FieldSpec parse_field(const std::string& text);
/// Source on levels 0..M-1; empty for zero.
AdaptedField make_source(const FieldSpec& f, const ScenarioTree& tree, const Grid& grid, std::uint64_t seed);
/// Field at level M; empty for zero.
AdaptedField make_terminal(const FieldSpec& f, const ScenarioTree& tree, const Grid& grid, std::uint64_t seed);

/// Terms joined by '+': initial:kappa | point:t@w | kernel:k0 (constant weight).
NonlocalCondition parse_condition(const std::string& text);

struct PeriodicSpec {
  Discretization disc;
  CoefficientSpec coeffs;
  double kappa = 1.0;
  FieldSpec phi;
  FieldSpec xi;
  std::uint64_t seed = 1;
  SolveMethod method = SolveMethod::Direct;
  double boundary_tol = 1e-9;
};

struct SolveSpec {
  enum class Mode { RoundTrip, Linearity };
  Mode mode = Mode::RoundTrip;
  Discretization disc;
  CoefficientSpec coeffs;
  NonlocalCondition condition;
  FieldSpec phi;
  FieldSpec xi;
  std::uint64_t seed = 1;
  int instances = 1;
  SolveMethod method = SolveMethod::Direct;
  double integral_tol = 1e-10;
  double boundary_tol = 1e-9;
  double alpha = 3.0;
  double linearity_tol = 1e-12;
};

struct SpectrumSpec {
  Discretization disc;
  CoefficientSpec coeffs;
  NonlocalCondition condition;
  /// rescale kappa of a single initial:kappa condition to this spectral radius
  std::optional<double> target_radius;
  FieldSpec phi;
  FieldSpec xi;
  std::uint64_t seed = 1;
  double radius_max = 0.9;
  double agreement_tol = 1e-8;
  double iteration_factor = 2.0;
};

struct DualitySpec {
  enum class Mode { Pairing, Mass };
  Mode mode = Mode::Pairing;
  Discretization disc;
  CoefficientSpec coeffs;
  double kappa = 1.0;
  std::uint64_t seed = 1;
  int pairs = 1;
  double gap_tol = 1e-10;
  /// mass mode: uniform | point:a | random
  std::string rho = "uniform";
  double mass_tol = 1e-6;
};

struct McSpec {
  enum class Mode { ExitBound, FeynmanKac, Nu2 };
  Mode mode = Mode::ExitBound;
  Interval domain;
  CoefficientSpec coeffs;
  InitialLaw start = PointStart{0.5};
  McOptions mc;
  double z_max = 3.0;
  double disc_tol = 0.02;
  /// Feynman-Kac: terminal function and tree resolution (collapsed tree)
  Profile terminal = Profile::constant(1.0);
  int tree_J = 127;
  int tree_M = 4000;
  /// nu_2 mode
  double q = 2.0;
  double nu = 0.5;
  double beta_bar_integral = 0.0;
  bool expect_smallb = true;
  std::optional<double> nu2_expected;
  double nu2_tol = 1e-4;
};

struct SweepSpec {
  Discretization disc;
  CoefficientSpec coeffs;
  NonlocalCondition condition;
  FieldSpec phi;
  FieldSpec xi;
  std::uint64_t seed = 1;
  double eps_min = -0.5;
  double eps_max = 0.5;
  int eps_count = 21;
  double flag_tol = 1e-6;
  /// engineered case: kappa of a single initial:kappa condition is rescaled so
  /// that the dominant eigenvalue of Q equals this value
  std::optional<double> target_eigenvalue;

  std::vector<double> eps_grid() const;
};

struct ConvergenceSpec {
  double x_min = 0.0;
  double x_max = 1.0;
  double horizon = 0.1;
  double b = 1.0;
  int levels = 3;
  /// J + 1 on the coarsest grid of the spatial study (doubled per level)
  int spatial_base_cells = 16;
  int spatial_M = 4096;
  int temporal_base_M = 16;
  int temporal_J = 63;
  int reference_J = 64;
  int reference_M = 64;
  double analytic_tol = 2e-2;
  double temporal_order_min = 0.9;
  double spatial_order_min = 1.8;
};

std::vector<Check> run_periodic(const PeriodicSpec& spec, const RunOptions& opts = {});
std::vector<Check> run_solve(const SolveSpec& spec, const RunOptions& opts = {});
std::vector<Check> run_spectrum(const SpectrumSpec& spec, const RunOptions& opts = {});
std::vector<Check> run_duality(const DualitySpec& spec, const RunOptions& opts = {});
std::vector<Check> run_mc(const McSpec& spec, const std::string& id = "mc", const RunOptions& opts = {});
std::vector<Check> run_sweep(const SweepSpec& spec, const RunOptions& opts = {});
std::vector<Check> run_convergence(const ConvergenceSpec& spec, const RunOptions& opts = {});

/// Per-row sweep details, used by run_sweep and by callers that need the table.
struct SweepTable {
  std::vector<EpsilonRow> rows;
  double kappa = 0.0;
  double dominant_eigenvalue = 0.0;
};
SweepTable sweep_table(const SweepSpec& spec, const RunOptions& opts = {});

/// The experiment kinds, which double as CLI subcommand names.
const std::vector<std::string>& experiment_kinds();

/// A validated experiment, ready to run.
struct PreparedExperiment {
  std::string id;
  std::string kind;
  std::string config_hash;
  std::function<std::vector<Check>(const RunOptions&)> run;
};

/// Parses and validates one section; every key must be recognised. A seed
/// override replaces the section's `seed` key (and therefore its hash).
PreparedExperiment prepare_experiment(const ConfigSection& section, std::optional<std::uint64_t> seed_override = {});

struct ExperimentResult {
  std::string id;
  std::string kind;
  std::string config_hash;
  std::vector<Check> checks;
  double wall_time_s = 0.0;
  /// library error raised while running, empty on success
  std::string error;
  bool passed() const;
};

ExperimentResult run_experiment(const PreparedExperiment& exp, const RunOptions& opts);

}  // namespace bspde
