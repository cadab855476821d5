#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ezcoal/errors.hpp"
#include "ezcoal/model.hpp"
#include "ezcoal/recursive_utility.hpp"

namespace ezcoal {

inline std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stateless generator keyed by (seed, path, step): a path's draws do not depend on
/// how many paths are simulated or in which order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) noexcept : key_(splitmix64(seed)) {}

  std::uint64_t bits(std::uint64_t path, std::uint64_t counter, std::uint64_t lane) const noexcept {
    return splitmix64(splitmix64(splitmix64(key_ ^ lane) + path) + counter);
  }

  /// Uniform on the open interval (0, 1).
  double uniform(std::uint64_t path, std::uint64_t counter, std::uint64_t lane) const noexcept {
    return (static_cast<double>(bits(path, counter, lane) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normals for steps 2j and 2j+1 come from one Box-Muller pair keyed by j.
  void normal_pair(std::uint64_t path, std::uint64_t pair_index, double& z0,
                   double& z1) const noexcept {
    const double u1 = uniform(path, pair_index, 0x5851f42d4c957f2dULL);
    const double u2 = uniform(path, pair_index, 0x14057b7ef767814fULL);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    z0 = r * std::cos(a);
    z1 = r * std::sin(a);
  }

  double normal(std::uint64_t path, std::uint64_t step) const noexcept {
    double z0 = 0.0;
    double z1 = 0.0;
    normal_pair(path, step / 2, z0, z1);
    return step % 2 == 0 ? z0 : z1;
  }

 private:
  std::uint64_t key_;
};

enum class Scheme { ExactLog, EulerMaruyama };

inline const char* to_string(Scheme s) {
  return s == Scheme::ExactLog ? "exact_log" : "euler_maruyama";
}

/// Seeded ensemble of wealth paths. Paths are regenerated on demand from the counter-based
/// generator, so memory does not grow with paths x nodes.
class PathSet {
 public:
  const TimeGrid& grid() const noexcept { return grid_; }
  double x0() const noexcept { return x0_; }
  std::size_t n_paths() const noexcept { return n_paths_; }
  std::uint64_t seed() const noexcept { return seed_; }
  Scheme scheme() const noexcept { return scheme_; }
  /// Euler-Maruyama paths that reached nonpositive wealth (absorbed at zero afterwards).
  std::size_t nonpositive_paths() const noexcept { return dead_; }

  /// Writes the wealth of path k at every node; returns false if the path was absorbed at 0.
  bool wealth_path(std::size_t k, std::span<double> out) const {
    const std::size_t n = grid_.n_steps();
    const CounterRng rng(seed_);
    out[0] = x0_;
    double z0 = 0.0;
    double z1 = 0.0;
    if (scheme_ == Scheme::ExactLog) {
      double log_x = std::log(x0_);
      for (std::size_t s = 0; s < n; ++s) {
        if (s % 2 == 0) rng.normal_pair(k, s / 2, z0, z1);
        const double z = s % 2 == 0 ? z0 : z1;
        log_x += log_drift_[s] + log_vol_[s] * z;
        out[s + 1] = std::exp(log_x);
      }
      return true;
    }
    const double sqrt_dt = std::sqrt(grid_.dt());
    double x = x0_;
    bool alive = true;
    for (std::size_t s = 0; s < n; ++s) {
      if (s % 2 == 0) rng.normal_pair(k, s / 2, z0, z1);
      const double z = s % 2 == 0 ? z0 : z1;
      if (alive) {
        x += x * (em_drift_[s] * grid_.dt() + em_vol_[s] * sqrt_dt * z);
        if (!(x > 0.0)) {
          alive = false;
          x = 0.0;
        }
      }
      out[s + 1] = x;
    }
    return alive;
  }

  std::vector<double> wealth_path(std::size_t k) const {
    std::vector<double> out(grid_.n_nodes());
    wealth_path(k, out);
    return out;
  }

 private:
  friend PathSet simulate_wealth(const MarketParams&, const StrategyProfile&, double,
                                 const TimeGrid&, std::size_t, std::uint64_t, Scheme,
                                 unsigned);

  PathSet(TimeGrid grid, double x0, std::size_t n_paths, std::uint64_t seed, Scheme scheme)
      : grid_(grid), x0_(x0), n_paths_(n_paths), seed_(seed), scheme_(scheme) {}

  TimeGrid grid_;
  double x0_;
  std::size_t n_paths_;
  std::uint64_t seed_;
  Scheme scheme_;
  std::size_t dead_ = 0;
  std::vector<double> log_drift_;  // integrated log-drift per step (ExactLog)
  std::vector<double> log_vol_;    // sqrt of integrated variance per step (ExactLog)
  std::vector<double> em_drift_;   // drift rate at the left node (Euler-Maruyama)
  std::vector<double> em_vol_;     // volatility at the left node (Euler-Maruyama)
};

/// Runs fn(k, buffer) for every path with contiguous blocks per thread. fn must only write
/// to slots owned by path k, which keeps results independent of the thread count.
template <class Fn>
void for_each_path(const PathSet& paths, unsigned threads, Fn&& fn) {
  const std::size_t n = paths.n_paths();
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<double> buffer(paths.grid().n_nodes());
    for (std::size_t k = begin; k < end; ++k) {
      const bool alive = paths.wealth_path(k, buffer);
      fn(k, std::span<const double>(buffer), alive);
    }
  };
  if (threads <= 1) {
    work(0, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t block = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = std::min(n, t * block);
    const std::size_t end = std::min(n, begin + block);
    if (begin < end) pool.emplace_back(work, begin, end);
  }
  for (auto& th : pool) th.join();
}

namespace detail {

/// Trapezoid over [a, b] using the left limit at b, so right-continuous steps integrate exactly.
template <class F>
double step_trapezoid(F&& f, double a, double b) {
  const double b_left = std::nextafter(b, a);
  return 0.5 * (b - a) * (f(a) + f(b_left));
}

}  // namespace detail

inline PathSet simulate_wealth(const MarketParams& market, const StrategyProfile& strategy,
                               double x0, const TimeGrid& grid, std::size_t n_paths,
                               std::uint64_t seed, Scheme scheme = Scheme::ExactLog,
                               unsigned threads = 0) {
  if (!(x0 > 0.0)) throw DomainError("initial wealth must be positive");
  if (n_paths == 0) throw DomainError("at least one path is required");
  strategy.check_admissible(grid);
  PathSet set(grid, x0, n_paths, seed, scheme);
  const std::size_t n = grid.n_steps();
  const double excess = market.mu - market.nu;
  const double var = market.sigma * market.sigma;
  if (scheme == Scheme::ExactLog) {
    set.log_drift_.resize(n);
    set.log_vol_.resize(n);
    auto drift = [&](double s) {
      const double p = strategy.total_investment(s);
      return market.nu + excess * p - strategy.total_consumption(s) - 0.5 * var * p * p;
    };
    auto variance = [&](double s) {
      const double p = strategy.total_investment(s);
      return var * p * p;
    };
    for (std::size_t s = 0; s < n; ++s) {
      const double a = grid.node(s);
      const double b = grid.node(s + 1);
      set.log_drift_[s] = detail::step_trapezoid(drift, a, b);
      set.log_vol_[s] = std::sqrt(detail::step_trapezoid(variance, a, b));
    }
    return set;
  }
  set.em_drift_.resize(n);
  set.em_vol_.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double t = grid.node(s);
    const double p = strategy.total_investment(t);
    set.em_drift_[s] = market.nu + excess * p - strategy.total_consumption(t);
    set.em_vol_[s] = market.sigma * p;
  }
  std::vector<unsigned char> dead(n_paths, 0);
  for_each_path(set, threads,
                [&](std::size_t k, std::span<const double>, bool alive) { dead[k] = !alive; });
  set.dead_ = static_cast<std::size_t>(std::count(dead.begin(), dead.end(), 1));
  if (set.dead_ == n_paths) {
    throw NonPositiveWealth("every Euler-Maruyama path reached nonpositive wealth");
  }
  return set;
}

/// Sample mean and standard error (unbiased variance) accumulated in index order.
struct SampleStats {
  double mean = 0.0;
  double std_error = 0.0;
};

inline SampleStats sample_stats(std::span<const double> v) {
  SampleStats out;
  if (v.empty()) return out;
  double sum = 0.0;
  for (double x : v) sum += x;
  out.mean = sum / static_cast<double>(v.size());
  if (v.size() < 2) return out;
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return out;
}

inline SampleStats terminal_wealth_stats(const PathSet& paths, unsigned threads = 0) {
  std::vector<double> terminal(paths.n_paths());
  for_each_path(paths, threads, [&](std::size_t k, std::span<const double> x, bool) {
    terminal[k] = x.back();
  });
  return sample_stats(terminal);
}

struct AgentUtilityCheck {
  double mc_estimate = 0.0;
  double analytic = 0.0;
  double abs_diff = 0.0;
  double std_error = 0.0;
  double z_score = 0.0;
};

struct UtilityCheckReport {
  std::vector<AgentUtilityCheck> agents;

  bool within(double z_max) const {
    return std::all_of(agents.begin(), agents.end(),
                       [z_max](const auto& a) { return a.z_score <= z_max; });
  }
};

namespace detail {

inline AgentUtilityCheck finish_check(std::span<const double> samples, double analytic) {
  const auto stats = sample_stats(samples);
  AgentUtilityCheck out;
  out.mc_estimate = stats.mean;
  out.analytic = analytic;
  out.abs_diff = std::abs(stats.mean - analytic);
  out.std_error = stats.std_error;
  out.z_score = stats.std_error > 0.0 ? out.abs_diff / stats.std_error
                : out.abs_diff == 0.0  ? 0.0
                                       : std::numeric_limits<double>::infinity();
  return out;
}

inline double wealth_power(double x, double p) { return x > 0.0 ? std::exp(p * std::log(x)) : 0.0; }

}  // namespace detail

/// Monte Carlo estimate of E[ int g_i(c_i X, Y_i) dr + h(X_T) ] with Y_i = theta_i X^{1-g}/(1-g)
/// against the closed form theta_i(t0) x0^{1-g}/(1-g).
inline UtilityCheckReport check_utility_representation(const CoalitionSpec& spec,
                                                       const MarketParams& market,
                                                       const StrategyProfile& strategy,
                                                       const ThetaSystem& theta,
                                                       const PathSet& paths,
                                                       unsigned threads = 0) {
  require_valid(spec, market);
  if (!(theta.grid() == paths.grid())) {
    throw GridMismatch("theta and paths must share one time grid");
  }
  if (theta.size() != spec.size() || strategy.size() != spec.size()) {
    throw DimensionMismatch("theta, strategy and coalition sizes differ");
  }
  const auto& grid = paths.grid();
  const std::size_t n_agents = spec.size();
  const std::size_t nodes = grid.n_nodes();
  const double g1 = 1.0 - spec.gamma;
  const double theta_exp = 1.0 - spec.alpha / g1;

  // Deterministic per-node coefficient A_i(s) with g_i(c X, Y) = A_i(s) X^{1-g}.
  std::vector<double> weight(nodes * n_agents);
  for (std::size_t k = 0; k < nodes; ++k) {
    const double s = grid.node(k);
    const double w = (k == 0 || k + 1 == nodes) ? 0.5 * grid.dt() : grid.dt();
    for (std::size_t i = 0; i < n_agents; ++i) {
      const double th = theta.at_node(k, i);
      const double a = (consumption_power(strategy.consumption(i, s), spec.alpha) *
                            pos_pow(th, theta_exp) -
                        spec.rhos[i] * th) /
                       spec.alpha;
      weight[k * n_agents + i] = w * a;
    }
  }

  std::vector<double> samples(paths.n_paths() * n_agents);
  for_each_path(paths, threads, [&](std::size_t p, std::span<const double> x, bool) {
    double* out = samples.data() + p * n_agents;
    for (std::size_t i = 0; i < n_agents; ++i) out[i] = 0.0;
    for (std::size_t k = 0; k < nodes; ++k) {
      const double xp = detail::wealth_power(x[k], g1);
      for (std::size_t i = 0; i < n_agents; ++i) out[i] += weight[k * n_agents + i] * xp;
    }
    const double terminal = detail::wealth_power(x[nodes - 1], g1) / g1;
    for (std::size_t i = 0; i < n_agents; ++i) out[i] += terminal;
  });

  UtilityCheckReport report;
  std::vector<double> column(paths.n_paths());
  for (std::size_t i = 0; i < n_agents; ++i) {
    for (std::size_t p = 0; p < paths.n_paths(); ++p) column[p] = samples[p * n_agents + i];
    report.agents.push_back(
        detail::finish_check(column, utility_value(theta.at_node(0, i), paths.x0(), spec.gamma)));
  }
  return report;
}

/// Discount rate used in the direct CRRA expectation. With gamma = 1 - alpha the aggregator
/// -rho (1-g) y / alpha discounts at rho; the scaled form discounts at alpha*rho.
enum class CrraDiscount { Aggregator, AlphaScaled };

/// Under gamma = 1 - alpha, estimates the discounted CRRA expectation directly and compares it
/// with the value from the theta representation of the same strategy.
inline UtilityCheckReport crra_expectation_check(const CoalitionSpec& spec,
                                                 const MarketParams& market,
                                                 const StrategyProfile& strategy,
                                                 const PathSet& paths, unsigned threads = 0,
                                                 CrraDiscount discount = CrraDiscount::Aggregator) {
  if (!spec.is_crra()) throw NotCRRA("crra_expectation_check requires gamma = 1 - alpha");
  const auto theta = theta_for_strategy(spec, market, strategy, paths.grid());
  const auto& grid = paths.grid();
  const std::size_t n_agents = spec.size();
  const std::size_t nodes = grid.n_nodes();
  const double a = spec.alpha;
  const double t0 = grid.t0();
  const double rate_scale = discount == CrraDiscount::Aggregator ? 1.0 : a;

  std::vector<double> weight(nodes * n_agents);
  std::vector<double> terminal_discount(n_agents);
  for (std::size_t i = 0; i < n_agents; ++i) {
    terminal_discount[i] = std::exp(-rate_scale * spec.rhos[i] * (grid.t_end() - t0)) / a;
  }
  for (std::size_t k = 0; k < nodes; ++k) {
    const double s = grid.node(k);
    const double w = (k == 0 || k + 1 == nodes) ? 0.5 * grid.dt() : grid.dt();
    for (std::size_t i = 0; i < n_agents; ++i) {
      weight[k * n_agents + i] = w * std::exp(-rate_scale * spec.rhos[i] * (s - t0)) *
                                 consumption_power(strategy.consumption(i, s), a) / a;
    }
  }

  std::vector<double> samples(paths.n_paths() * n_agents);
  for_each_path(paths, threads, [&](std::size_t p, std::span<const double> x, bool) {
    double* out = samples.data() + p * n_agents;
    for (std::size_t i = 0; i < n_agents; ++i) out[i] = 0.0;
    for (std::size_t k = 0; k < nodes; ++k) {
      const double xa = detail::wealth_power(x[k], a);
      for (std::size_t i = 0; i < n_agents; ++i) out[i] += weight[k * n_agents + i] * xa;
    }
    const double xt = detail::wealth_power(x[nodes - 1], a);
    for (std::size_t i = 0; i < n_agents; ++i) out[i] += terminal_discount[i] * xt;
  });

  UtilityCheckReport report;
  std::vector<double> column(paths.n_paths());
  for (std::size_t i = 0; i < n_agents; ++i) {
    for (std::size_t p = 0; p < paths.n_paths(); ++p) column[p] = samples[p * n_agents + i];
    report.agents.push_back(
        detail::finish_check(column, utility_value(theta.at_node(0, i), paths.x0(), spec.gamma)));
  }
  return report;
}

}  // namespace ezcoal
