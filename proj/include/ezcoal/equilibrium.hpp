#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ezcoal/errors.hpp"
#include "ezcoal/model.hpp"
#include "ezcoal/ode.hpp"
#include "ezcoal/recursive_utility.hpp"

namespace ezcoal {

/// Equilibrium consumption fractions c_i = (sum_j theta_j)^{1/(a-1)} theta_i^{e}.
inline void equilibrium_consumption(const CoalitionSpec& spec, std::span<const double> theta,
                                    std::span<double> out) {
  double total = 0.0;
  for (double v : theta) total += v;
  const double scale = pos_pow(total, 1.0 / (spec.alpha - 1.0));
  const double e = spec.consumption_exponent();
  for (std::size_t i = 0; i < theta.size(); ++i) out[i] = scale * pos_pow(theta[i], e);
}

/// Right-hand side of the coupled equilibrium equations for theta_1..theta_N.
inline VectorField equilibrium_field(const CoalitionSpec& spec, const MarketParams& market) {
  const double g1 = 1.0 - spec.gamma;
  const double excess = market.mu - market.nu;
  const double growth = market.nu + excess * excess / (2.0 * spec.gamma * market.sigma * market.sigma);
  const double e = spec.consumption_exponent();
  const double inv_a = 1.0 / spec.alpha;
  const double p_cons = 1.0 / (spec.alpha - 1.0);
  const double p_source = spec.alpha / (spec.alpha - 1.0);
  return VectorField(spec.size(), [rhos = spec.rhos, g1, growth, e, inv_a, p_cons, p_source](
                                      double, std::span<const double> y, std::span<double> dy) {
    double total = 0.0;
    double total_pow = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
      total += y[k];
      total_pow += pos_pow(y[k], e);
    }
    const double cons_scale = pos_pow(total, p_cons);
    const double source_scale = pos_pow(total, p_source);
    const double drift = growth - cons_scale * total_pow;
    for (std::size_t i = 0; i < y.size(); ++i) {
      dy[i] = -(g1 * y[i] * drift - g1 * rhos[i] * inv_a * y[i] +
                inv_a * g1 * pos_pow(y[i], e) * source_scale);
    }
  });
}

/// Solved equilibrium: value factors plus the investment and consumption rules built on them.
class EquilibriumSolution {
 public:
  EquilibriumSolution(ThetaSystem theta, MarketParams market)
      : theta_(std::make_shared<const ThetaSystem>(std::move(theta))),
        market_(market),
        total_investment_(market.merton_fraction(theta_->spec().gamma)) {}

  const ThetaSystem& theta() const noexcept { return *theta_; }
  const CoalitionSpec& spec() const noexcept { return theta_->spec(); }
  const MarketParams& market() const noexcept { return market_; }
  const TimeGrid& grid() const noexcept { return theta_->grid(); }
  std::size_t size() const noexcept { return theta_->size(); }

  /// Sum of the agents' investment fractions; constant in time and in the discount rates.
  double total_investment() const noexcept { return total_investment_; }
  double total_investment(double) const noexcept { return total_investment_; }

  double consumption(std::size_t i, double t) const {
    const auto th = theta_->at(t);
    std::vector<double> c(th.size());
    equilibrium_consumption(spec(), th, c);
    return c[i];
  }

  std::vector<double> consumption_at_node(std::size_t node) const {
    std::vector<double> th(size());
    for (std::size_t i = 0; i < size(); ++i) th[i] = theta_->at_node(node, i);
    std::vector<double> c(size());
    equilibrium_consumption(spec(), th, c);
    return c;
  }

  /// v = (1/N) sum_i theta_i.
  double value_factor(double t) const {
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += (*theta_)(t, i);
    return s / static_cast<double>(size());
  }
  double value_factor_at_node(std::size_t node) const {
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += theta_->at_node(node, i);
    return s / static_cast<double>(size());
  }

  /// Feedback profile with the aggregate investment split equally among the agents.
  StrategyProfile strategy() const {
    const std::size_t n = size();
    std::vector<Schedule> pi(n, constant_schedule(total_investment_ / static_cast<double>(n)));
    std::vector<Schedule> c;
    for (std::size_t i = 0; i < n; ++i) {
      c.emplace_back([theta = theta_, i](double t) {
        const auto th = theta->at(t);
        std::vector<double> out(th.size());
        equilibrium_consumption(theta->spec(), th, out);
        return out[i];
      });
    }
    return {std::move(pi), std::move(c)};
  }

 private:
  std::shared_ptr<const ThetaSystem> theta_;
  MarketParams market_;
  double total_investment_;
};

inline EquilibriumSolution solve_equilibrium(const CoalitionSpec& spec, const MarketParams& market,
                                             const TimeGrid& grid,
                                             A1Denominator a1 = A1Denominator::Sigma) {
  require_valid(spec, market);
  const std::vector<double> terminal(spec.size(), 1.0);
  try {
    auto traj = detail::solve_positive(equilibrium_field(spec, market), terminal, grid,
                                       "solve_equilibrium");
    return {ThetaSystem(std::move(traj), spec, ThetaProvenance::Equilibrium), market};
  } catch (const PositivityLoss& e) {
    const auto status = classify_a1(spec, market, a1);
    std::string msg = e.what();
    msg += "; A1 status: " + status.detail;
    if (!status.any()) msg += " (A1 does not hold, existence is not guaranteed)";
    throw PositivityLoss(e.time(), e.component(), msg);
  }
}

/// Constant per-agent investment and consumption fractions used as a perturbation.
struct ConstantPerturbation {
  std::vector<double> investment;
  std::vector<double> consumption;

  StrategyProfile profile() const { return StrategyProfile::constant(investment, consumption); }
};

/// Pointwise maximizer of the coalition Hamiltonian given theta at one instant.
inline ConstantPerturbation hamiltonian_maximizer(const CoalitionSpec& spec,
                                                  const MarketParams& market,
                                                  std::span<const double> theta) {
  const std::size_t n = theta.size();
  ConstantPerturbation out;
  out.investment.assign(n, market.merton_fraction(spec.gamma) / static_cast<double>(n));
  out.consumption.resize(n);
  equilibrium_consumption(spec, theta, out.consumption);
  return out;
}

/// Seeded sample of constant perturbations, pi_i ~ U[0, pi_max], c_i ~ U[0, c_max].
inline std::vector<ConstantPerturbation> random_perturbations(std::size_t count,
                                                              std::uint64_t seed,
                                                              std::size_t n_agents, double pi_max,
                                                              double c_max) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> pi_dist(0.0, pi_max);
  std::uniform_real_distribution<double> c_dist(0.0, c_max);
  std::vector<ConstantPerturbation> out(count);
  for (auto& p : out) {
    p.investment.resize(n_agents);
    p.consumption.resize(n_agents);
    for (std::size_t i = 0; i < n_agents; ++i) {
      p.investment[i] = pi_dist(gen);
      p.consumption[i] = c_dist(gen);
    }
  }
  return out;
}

struct VerifyOptions {
  std::vector<double> epsilons{1e-1, 1e-2, 1e-3, 1e-4};
  double slope_tolerance = 1e-6;
  double wealth = 1.0;
  std::size_t substeps = 64;  // RK4 steps on each [t, t+eps]
};

struct PerturbationSample {
  double epsilon = 0.0;
  double perturbed_value = 0.0;  // J^eps
  double reference_value = 0.0;  // J re-integrated over [t, t+eps] under the base strategy
  double slope = 0.0;
};

struct PerturbationReport {
  double t = 0.0;
  double wealth = 1.0;
  double base_value = 0.0;  // J from the solved theta at t
  double slope_tolerance = 0.0;
  std::vector<PerturbationSample> samples;
  bool pass = false;

  double max_slope() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& s : samples) m = std::max(m, s.slope);
    return m;
  }
};

/// Compares the coalition objective when the base strategy is replaced by `perturbation`
/// on [t, t+eps) against the base strategy itself. Both sides start from theta(t+eps) and share
/// the same sub-grid, so the difference carries no discretization offset.
inline PerturbationReport verify_perturbation(const CoalitionSpec& spec, const MarketParams& market,
                                              const ThetaSystem& base_theta,
                                              const StrategyProfile& base_strategy, double t,
                                              const StrategyProfile& perturbation,
                                              const VerifyOptions& opts = {}) {
  require_valid(spec, market);
  const auto& grid = base_theta.grid();
  if (!(t >= grid.t0() && t < grid.t_end())) {
    throw BadEpsilon("perturbation time must lie in [t0, T)");
  }
  if (perturbation.size() != spec.size() || base_strategy.size() != spec.size()) {
    throw DimensionMismatch("perturbation and coalition have different numbers of agents");
  }
  for (std::size_t k = 1; k < opts.epsilons.size(); ++k) {
    if (!(opts.epsilons[k] < opts.epsilons[k - 1])) {
      throw BadEpsilon("epsilons must be strictly decreasing");
    }
  }
  if (!(opts.wealth > 0.0)) throw DomainError("wealth must be positive");

  const std::size_t n = spec.size();
  const double scale = pos_pow(opts.wealth, 1.0 - spec.gamma) / (1.0 - spec.gamma);
  auto objective = [&](std::span<const double> theta) {
    double s = 0.0;
    for (double v : theta) s += v;
    return s / static_cast<double>(n) * scale;
  };

  PerturbationReport report;
  report.t = t;
  report.wealth = opts.wealth;
  report.slope_tolerance = opts.slope_tolerance;
  report.base_value = objective(base_theta.at(t));

  const auto pert_field = strategy_theta_field(spec, market, perturbation);
  const auto base_field = strategy_theta_field(spec, market, base_strategy);
  for (double eps : opts.epsilons) {
    if (!(eps > 0.0)) throw BadEpsilon("epsilon must be positive");
    double end = t + eps;
    if (end > grid.t_end()) {
      if (end - grid.t_end() > 1e-12 * std::max(1.0, std::abs(grid.t_end()))) {
        std::ostringstream msg;
        msg << "t + eps = " << end << " exceeds the horizon " << grid.t_end();
        throw BadEpsilon(msg.str());
      }
      end = grid.t_end();
    }
    const TimeGrid local(t, end, opts.substeps);
    const auto start = base_theta.at(end);
    const auto pert = detail::solve_positive(pert_field, start, local, "verify_equilibrium");
    const auto ref = detail::solve_positive(base_field, start, local, "verify_equilibrium");
    PerturbationSample sample;
    sample.epsilon = eps;
    sample.perturbed_value = objective(pert.state(0));
    sample.reference_value = objective(ref.state(0));
    sample.slope = (sample.perturbed_value - sample.reference_value) / eps;
    report.samples.push_back(sample);
  }
  report.pass = std::all_of(report.samples.begin(), report.samples.end(),
                            [&](const auto& s) { return s.slope <= opts.slope_tolerance; });
  return report;
}

inline PerturbationReport verify_equilibrium(const EquilibriumSolution& sol, double t,
                                             const StrategyProfile& perturbation,
                                             const VerifyOptions& opts = {}) {
  return verify_perturbation(sol.spec(), sol.market(), sol.theta(), sol.strategy(), t,
                             perturbation, opts);
}

struct OrderingReport {
  bool pass = true;
  std::string regime;
  std::vector<std::string> counterexamples;
};

/// rho_i <= rho_j must imply theta_i >= theta_j at every node.
inline OrderingReport check_theta_monotonicity(const EquilibriumSolution& sol,
                                               double slack = 1e-10) {
  OrderingReport out;
  out.regime = "theta decreasing in rho";
  const auto& rhos = sol.spec().rhos;
  const auto& grid = sol.grid();
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    for (std::size_t j = 0; j < rhos.size(); ++j) {
      if (i == j || rhos[i] > rhos[j]) continue;
      for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
        const double a = sol.theta().at_node(k, i);
        const double b = sol.theta().at_node(k, j);
        if (a < b - slack) {
          out.pass = false;
          std::ostringstream msg;
          msg << "t=" << grid.node(k) << ": theta_" << (i + 1) << "=" << a << " < theta_"
              << (j + 1) << "=" << b;
          out.counterexamples.push_back(msg.str());
          break;
        }
      }
    }
  }
  return out;
}

/// gamma <= 1-alpha: rho_i <= rho_j implies c_i >= c_j; gamma >= 1-alpha: c_i <= c_j.
inline OrderingReport check_consumption_ordering(const EquilibriumSolution& sol,
                                                 double slack = 1e-10) {
  OrderingReport out;
  const auto& spec = sol.spec();
  const double threshold = 1.0 - spec.alpha;
  const bool low = spec.gamma <= threshold;
  const bool high = spec.gamma >= threshold;
  out.regime = low && high ? "gamma = 1-alpha (agent-independent)"
               : low       ? "gamma < 1-alpha (patient agent consumes more)"
                           : "gamma > 1-alpha (patient agent consumes less)";
  const auto& rhos = spec.rhos;
  const auto& grid = sol.grid();
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
    const auto c = sol.consumption_at_node(k);
    for (std::size_t i = 0; i < rhos.size(); ++i) {
      for (std::size_t j = 0; j < rhos.size(); ++j) {
        if (i == j || rhos[i] > rhos[j]) continue;
        const bool bad = (low && c[i] < c[j] - slack) || (high && c[i] > c[j] + slack);
        if (bad && out.counterexamples.size() < 16) {
          std::ostringstream msg;
          msg << "t=" << grid.node(k) << ": c_" << (i + 1) << "=" << c[i] << " vs c_" << (j + 1)
              << "=" << c[j];
          out.counterexamples.push_back(msg.str());
        }
        out.pass = out.pass && !bad;
      }
    }
  }
  return out;
}

}  // namespace ezcoal
