#include "bspde/mc_diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "bspde/errors.hpp"
#include "bspde/parallel.hpp"

namespace bspde {

namespace {

constexpr double kZ95 = 1.959963984540054;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

struct BlockResult {
  StepMoments moments;
};

class StartSampler {
 public:
  StartSampler(const InitialLaw& law, Interval domain) : law_(law), domain_(domain) {
    if (const auto* d = std::get_if<DensityStart>(&law_)) {
      if (d->density.size() != d->grid.size()) throw ShapeError("simulate_paths: density must be a grid field");
      if (d->density.minCoeff() < 0.0 || d->density.sum() <= 0.0)
        throw DomainError("simulate_paths: start density must be non-negative with positive mass");
      weights_.assign(d->density.data(), d->density.data() + d->density.size());
    }
  }

  double operator()(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    return std::visit(Overloaded{
                          [](const PointStart& p) { return p.a; },
                          [&](const UniformStart&) {
                            return domain_.x_min + (domain_.x_max - domain_.x_min) * unit(rng);
                          },
                          [&](const DensityStart& d) {
                            std::discrete_distribution<int> cell(weights_.begin(), weights_.end());
                            const int j = cell(rng);
                            return d.grid.x(j) + d.grid.h() * (unit(rng) - 0.5);
                          },
                      },
                      law_);
  }

 private:
  const InitialLaw& law_;
  Interval domain_;
  std::vector<double> weights_;
};

}  // namespace

double StepMoments::variance() const {
  if (count < 2) return 0.0;
  const double m = mean();
  return sum_sq / count - m * m;
}

double StepMoments::variance_se() const {
  if (count < 2) return 0.0;
  const double m2 = sum_sq / count;
  const double m4 = sum_quad / count;
  return std::sqrt(std::max(0.0, m4 - m2 * m2) / count);
}

PathEnsemble simulate_paths(const CoefficientModel& model, Interval domain, const InitialLaw& law,
                            const McOptions& options) {
  if (!model.deterministic()) throw DomainError("simulate_paths: Monte Carlo needs deterministic coefficients");
  if (model.form != OperatorForm::NonDivergence)
    throw DomainError("simulate_paths: coefficients must be in non-divergence form");
  if (model.beta.size() != model.beta_bar.size()) throw ShapeError("simulate_paths: beta/beta_bar size mismatch");
  if (options.n_paths < 1 || !(options.dt > 0.0) || !(options.horizon > 0.0) || options.block_size < 1)
    throw DomainError("simulate_paths: invalid Monte Carlo options");
  if (!(domain.x_max > domain.x_min)) throw DomainError("simulate_paths: empty domain");

  const int N = model.brownian_count();
  const auto steps = static_cast<std::int64_t>(std::llround(options.horizon / options.dt));
  const double dt = options.horizon / static_cast<double>(steps);
  const double sqrt_dt = std::sqrt(dt);
  const StartSampler sampler(law, domain);

  PathEnsemble ens;
  ens.options = options;
  ens.domain = domain;
  ens.paths.resize(static_cast<std::size_t>(options.n_paths));

  const std::int64_t blocks = (options.n_paths + options.block_size - 1) / options.block_size;
  std::vector<BlockResult> results(static_cast<std::size_t>(blocks));

  parallel_for(blocks, options.threads, [&](std::int64_t block) {
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed & 0xffffffffu),
                      static_cast<std::uint32_t>(options.seed >> 32), static_cast<std::uint32_t>(block),
                      static_cast<std::uint32_t>(block >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> beta(N), beta_bar(N), dw(N);
    StepMoments& mom = results[static_cast<std::size_t>(block)].moments;

    const std::int64_t first = block * options.block_size;
    const std::int64_t last = std::min(options.n_paths, first + options.block_size);
    for (std::int64_t k = first; k < last; ++k) {
      PathRecord& rec = ens.paths[static_cast<std::size_t>(k)];
      rec.start = sampler(rng);
      double y = rec.start;
      rec.exit_time = std::numeric_limits<double>::infinity();
      if (!domain.contains(y)) {
        rec.exit_time = 0.0;
        rec.position = y;
        continue;
      }
      bool alive = true;
      for (std::int64_t step = 0; step < steps && alive; ++step) {
        const PointContext ctx{y, step * dt, 0, 0};
        const double b = model.b(ctx);
        const double drift = model.drift(ctx);
        const double lambda = model.killing(ctx);
        double residual = 2.0 * b;
        double f_tilde = drift;
        for (int i = 0; i < N; ++i) {
          beta[i] = model.beta[i](ctx);
          beta_bar[i] = model.beta_bar[i](ctx);
          residual -= beta[i] * beta[i];
          f_tilde -= beta_bar[i] * beta[i];
        }
        if (!(residual > 0.0)) {
          std::ostringstream msg;
          msg << "simulate_paths: 2b - sum beta_i^2 = " << residual << " at x = " << y
              << "; the residual diffusion needs 2b > sum beta_i^2 strictly";
          throw ConditionError(msg.str());
        }
        double dy = f_tilde * dt;
        double bb_dw = 0.0;
        double bb_sq = 0.0;
        for (int i = 0; i < N; ++i) {
          dw[i] = sqrt_dt * normal(rng);
          dy += beta[i] * dw[i];
          bb_dw += beta_bar[i] * dw[i];
          bb_sq += beta_bar[i] * beta_bar[i];
        }
        dy += std::sqrt(residual) * sqrt_dt * normal(rng);
        rec.int_killing += lambda * dt;
        rec.int_beta_bar_dw += bb_dw;
        rec.int_beta_bar_sq += bb_sq * dt;
        mom.count += 1;
        mom.sum += dy;
        mom.sum_sq += dy * dy;
        mom.sum_quad += dy * dy * dy * dy;

        const double next = y + dy;
        if (!domain.contains(next)) {
          alive = false;
        } else if (options.bridge_exit) {
          const double var = 2.0 * b * dt;
          const double p_low = std::exp(-2.0 * (y - domain.x_min) * (next - domain.x_min) / var);
          const double p_high = std::exp(-2.0 * (domain.x_max - y) * (domain.x_max - next) / var);
          if (unit(rng) < p_low + p_high) alive = false;
        }
        y = next;
        if (!alive) rec.exit_time = (step + 1) * dt;
      }
      rec.position = y;
      rec.survived = alive;
    }
  });

  for (const auto& r : results) {
    ens.moments.count += r.moments.count;
    ens.moments.sum += r.moments.sum;
    ens.moments.sum_sq += r.moments.sum_sq;
    ens.moments.sum_quad += r.moments.sum_quad;
  }
  return ens;
}

GirsanovWeights girsanov_weight(const PathRecord& path) {
  GirsanovWeights w;
  w.gamma_m = std::exp(path.int_beta_bar_dw - 0.5 * path.int_beta_bar_sq);
  w.gamma = std::exp(-path.int_killing) * w.gamma_m;
  return w;
}

namespace {

WeightedEstimate sample_mean(const std::vector<double>& values) {
  WeightedEstimate e;
  const auto n = static_cast<double>(values.size());
  if (values.empty()) return e;
  // Kahan-compensated sums in path order
  double sum = 0.0, c = 0.0, sum_sq = 0.0, c2 = 0.0;
  for (double v : values) {
    double y = v - c;
    double t = sum + y;
    c = (t - sum) - y;
    sum = t;
    y = v * v - c2;
    t = sum_sq + y;
    c2 = (t - sum_sq) - y;
    sum_sq = t;
  }
  e.estimate = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum_sq - n * e.estimate * e.estimate) / (n - 1.0)) : 0.0;
  e.std_error = std::sqrt(var / n);
  e.ci_low = e.estimate - kZ95 * e.std_error;
  e.ci_high = e.estimate + kZ95 * e.std_error;
  e.n_effective = sum_sq > 0.0 ? sum * sum / sum_sq : 0.0;
  return e;
}

}  // namespace

WeightedEstimate estimate_exit_bound(const PathEnsemble& ensemble) {
  WeightedEstimate e;
  const auto n = static_cast<double>(ensemble.paths.size());
  if (ensemble.paths.empty()) return e;
  const auto survivors =
      std::count_if(ensemble.paths.begin(), ensemble.paths.end(), [](const PathRecord& p) { return p.survived; });
  const double p = static_cast<double>(survivors) / n;
  e.estimate = p;
  e.std_error = std::sqrt(p * (1.0 - p) / n);
  const double z2 = kZ95 * kZ95;
  const double centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
  const double half = kZ95 / (1.0 + z2 / n) * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  e.ci_low = centre - half;
  e.ci_high = centre + half;
  e.n_effective = n;
  return e;
}

WeightedEstimate estimate_exit_bound(const CoefficientModel& model, Interval domain, const InitialLaw& law,
                                     const McOptions& options) {
  return estimate_exit_bound(simulate_paths(model, domain, law, options));
}

WeightedEstimate feynman_kac_estimate(const PathEnsemble& ensemble, const std::function<double(double)>& Phi) {
  std::vector<double> values;
  values.reserve(ensemble.paths.size());
  for (const auto& p : ensemble.paths) values.push_back(p.survived ? girsanov_weight(p).gamma * Phi(p.position) : 0.0);
  return sample_mean(values);
}

WeightedEstimate martingale_mean(const PathEnsemble& ensemble) {
  std::vector<double> values;
  values.reserve(ensemble.paths.size());
  for (const auto& p : ensemble.paths) values.push_back(girsanov_weight(p).gamma_m);
  return sample_mean(values);
}

FeynmanKacReport feynman_kac_check(const CoefficientModel& model, Interval domain, const InitialLaw& law,
                                   const std::function<double(double)>& Phi, double tree_value,
                                   double discretization_tol, const McOptions& options) {
  FeynmanKacReport r;
  r.mc = feynman_kac_estimate(simulate_paths(model, domain, law, options), Phi);
  r.tree_value = tree_value;
  r.gap = std::abs(r.mc.estimate - tree_value);
  r.tolerance = std::max(3.0 * r.mc.std_error, discretization_tol * std::abs(tree_value));
  r.pass = r.gap <= r.tolerance;
  return r;
}

Nu2Report evaluate_nu2(double q, double nu, double beta_bar_sq_integral) {
  if (!(q > 1.0)) throw DomainError("evaluate_nu2: q must exceed 1");
  if (!(nu > 0.0 && nu < 1.0)) throw DomainError("evaluate_nu2: nu must lie in (0, 1)");
  if (!(beta_bar_sq_integral >= 0.0)) throw DomainError("evaluate_nu2: the beta_bar integral must be non-negative");

  auto nu2 = [&](double qq) {
    const double inv_p = 1.0 - 1.0 / qq;
    return std::pow(nu, inv_p) * std::exp(inv_p * (std::log(nu) + 0.5 * qq * beta_bar_sq_integral));
  };

  Nu2Report r;
  r.q = q;
  r.nu2 = nu2(q);
  r.smallb_lhs = 0.5 * beta_bar_sq_integral + std::log(nu);
  r.condition_iii = r.smallb_lhs < 0.0;
  r.best_q = q;
  r.best_nu2 = r.nu2;
  // log-spaced scan of q - 1 over [1e-3, 1e3]
  constexpr int kSamples = 601;
  for (int k = 0; k < kSamples; ++k) {
    const double qq = 1.0 + std::pow(10.0, -3.0 + 6.0 * k / (kSamples - 1));
    const double v = nu2(qq);
    if (v < r.best_nu2) {
      r.best_nu2 = v;
      r.best_q = qq;
    }
  }
  return r;
}

double beta_bar_sup_integral(const CoefficientSet& coeffs, double dt) {
  double total = 0.0;
  for (const auto& bb : coeffs.beta_bar) {
    for (int t = bb.first_level(); t < bb.last_level(); ++t) {
      const double sup = bb.level(t).cwiseAbs().maxCoeff();
      total += dt * sup * sup;
    }
  }
  return total;
}

void write_path_dump(const PathEnsemble& ensemble, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("write_path_dump: cannot open " + path);
  auto put_u64 = [&](std::uint64_t v) {
    unsigned char bytes[8];
    for (int k = 0; k < 8; ++k) bytes[k] = static_cast<unsigned char>(v >> (8 * k));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  };
  auto put_f64 = [&](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u64(bits);
  };
  out.write("BSPDEMC1", 8);
  put_u64(static_cast<std::uint64_t>(ensemble.paths.size()));
  put_f64(ensemble.options.dt);
  put_f64(ensemble.options.horizon);
  put_u64(ensemble.options.seed);
  for (const auto& p : ensemble.paths) {
    put_f64(p.start);
    put_f64(p.position);
    put_f64(p.exit_time);
    put_f64(p.survived ? 1.0 : 0.0);
    put_f64(p.int_killing);
    put_f64(p.int_beta_bar_dw);
    put_f64(p.int_beta_bar_sq);
  }
  if (!out) throw Error("write_path_dump: write failed for " + path);
}

}  // namespace bspde
