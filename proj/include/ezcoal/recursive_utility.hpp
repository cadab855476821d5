#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ezcoal/errors.hpp"
#include "ezcoal/model.hpp"
#include "ezcoal/ode.hpp"

namespace ezcoal {

/// x^e for x > 0 via exp/log; NaN for x <= 0 so that integration reports the loss.
inline double pos_pow(double x, double e) noexcept {
  if (!(x > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return std::exp(e * std::log(x));
}

/// c^alpha for a consumption rate c >= 0.
inline double consumption_power(double c, double alpha) noexcept {
  return c > 0.0 ? std::exp(alpha * std::log(c)) : 0.0;
}

/// Epstein-Zin aggregator g(q, y) of one agent.
struct Aggregator {
  double gamma = 0.5;
  double alpha = 0.5;
  double rho = 0.0;

  double operator()(double q, double y) const {
    if (!(y > 0.0)) throw DomainError("aggregator requires (1-gamma) y > 0");
    if (!(q >= 0.0)) throw DomainError("aggregator requires q >= 0");
    const double base = (1.0 - gamma) * y;
    const double ratio = alpha / (1.0 - gamma);
    return (pos_pow(base, 1.0 - ratio) *
            (consumption_power(q, alpha) - rho * pos_pow(base, ratio))) /
           alpha;
  }
};

inline double aggregator_value(const Aggregator& agg, double q, double y) { return agg(q, y); }

/// Terminal reward x^{1-gamma}/(1-gamma).
inline double terminal_reward(double x, double gamma) {
  return pos_pow(x, 1.0 - gamma) / (1.0 - gamma);
}

/// Y = theta x^{1-gamma}/(1-gamma), the recursive utility carried by wealth x.
inline double utility_value(double theta, double x, double gamma) {
  if (!(theta > 0.0) || !(x > 0.0)) throw DomainError("utility_value needs theta > 0 and x > 0");
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("utility_value needs gamma in (0,1)");
  return theta * pos_pow(x, 1.0 - gamma) / (1.0 - gamma);
}

enum class ThetaProvenance { ForStrategy, Equilibrium, OneAgent, PrecommittedCRRA };

inline const char* to_string(ThetaProvenance p) {
  switch (p) {
    case ThetaProvenance::ForStrategy: return "ForStrategy";
    case ThetaProvenance::Equilibrium: return "Equilibrium";
    case ThetaProvenance::OneAgent: return "OneAgent";
    case ThetaProvenance::PrecommittedCRRA: return "PrecommittedCRRA";
  }
  return "?";
}

/// Solved value-function factors theta_1..theta_N, positive at every node.
class ThetaSystem {
 public:
  ThetaSystem(Trajectory trajectory, CoalitionSpec spec, ThetaProvenance provenance)
      : traj_(std::move(trajectory)), spec_(std::move(spec)), provenance_(provenance) {}

  const Trajectory& trajectory() const noexcept { return traj_; }
  const TimeGrid& grid() const noexcept { return traj_.grid(); }
  const CoalitionSpec& spec() const noexcept { return spec_; }
  ThetaProvenance provenance() const noexcept { return provenance_; }
  std::size_t size() const noexcept { return traj_.dimension(); }

  double at_node(std::size_t node, std::size_t i) const { return traj_.value(node, i); }
  double operator()(double t, std::size_t i) const { return traj_.at(t, i); }
  std::vector<double> at(double t) const { return traj_.at(t); }

 private:
  Trajectory traj_;
  CoalitionSpec spec_;
  ThetaProvenance provenance_;
};

namespace detail {

/// Integrates a theta-type system and converts blow-up or sign loss into PositivityLoss.
inline Trajectory solve_positive(const VectorField& field, std::span<const double> terminal,
                                 const TimeGrid& grid, const std::string& context) {
  Trajectory traj = [&] {
    try {
      return integrate_terminal(field, terminal, grid);
    } catch (const NonFiniteState& e) {
      std::ostringstream msg;
      msg << context << ": theta_" << (e.component() + 1)
          << " lost positivity or diverged near t=" << e.time();
      throw PositivityLoss(e.time(), e.component(), msg.str());
    }
  }();
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
    for (std::size_t i = 0; i < traj.dimension(); ++i) {
      if (!(traj.value(k, i) > 0.0)) {
        std::ostringstream msg;
        msg << context << ": theta_" << (i + 1) << " = " << traj.value(k, i)
            << " is not positive at t=" << grid.node(k);
        throw PositivityLoss(grid.node(k), i, msg.str());
      }
    }
  }
  return traj;
}

/// Per-agent linear coefficient (1-g)[(mu-nu)P - C + nu - g s^2 P^2/2 - rho_i/a] at time s.
struct LinearRate {
  const CoalitionSpec& spec;
  const MarketParams& market;
  const StrategyProfile& strategy;

  double common(double s) const {
    const double p = strategy.total_investment(s);
    const double c = strategy.total_consumption(s);
    return (1.0 - spec.gamma) * ((market.mu - market.nu) * p - c + market.nu -
                                 0.5 * spec.gamma * market.sigma * market.sigma * p * p);
  }
  double agent(double common_part, std::size_t i) const {
    return common_part - (1.0 - spec.gamma) * spec.rhos[i] / spec.alpha;
  }
};

inline void require_strategy(const CoalitionSpec& spec, const StrategyProfile& strategy,
                             const TimeGrid& grid) {
  if (strategy.size() != spec.size()) {
    throw DimensionMismatch("strategy and coalition have different numbers of agents");
  }
  strategy.check_admissible(grid);
}

}  // namespace detail

/// Right-hand side d(theta_i)/ds of the value-factor equations under a fixed strategy.
inline VectorField strategy_theta_field(const CoalitionSpec& spec, const MarketParams& market,
                                        const StrategyProfile& strategy) {
  const double source_exp = ((1.0 - spec.gamma) - spec.alpha) / (1.0 - spec.gamma);
  const double source_scale = (1.0 - spec.gamma) / spec.alpha;
  return VectorField(spec.size(), [spec, market, strategy, source_exp, source_scale](
                                      double s, std::span<const double> y, std::span<double> dy) {
    const detail::LinearRate rate{spec, market, strategy};
    const double common = rate.common(s);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double source = source_scale * pos_pow(y[i], source_exp) *
                            consumption_power(strategy.consumption(i, s), spec.alpha);
      dy[i] = -(rate.agent(common, i) * y[i] + source);
    }
  });
}

/// Value factors of each agent under an arbitrary admissible feedback strategy.
inline ThetaSystem theta_for_strategy(const CoalitionSpec& spec, const MarketParams& market,
                                      const StrategyProfile& strategy, const TimeGrid& grid) {
  require_valid(spec, market);
  detail::require_strategy(spec, strategy, grid);
  const std::vector<double> terminal(spec.size(), 1.0);
  return {detail::solve_positive(strategy_theta_field(spec, market, strategy), terminal, grid,
                                 "theta_for_strategy"),
          spec, ThetaProvenance::ForStrategy};
}

/// Lower bound delta and upper bound kappa for theta under a given strategy.
struct BoundPair {
  double delta = 0.0;
  double kappa = 0.0;
  std::vector<double> agent_delta;
  std::vector<double> agent_kappa;
};

/// Comparison bounds from linear ODEs: dropping the consumption source gives delta;
/// dominating it (by (1+theta) c^a when gamma <= 1-alpha, by delta^(...) c^a otherwise) gives kappa.
inline BoundPair theta_bounds(const CoalitionSpec& spec, const MarketParams& market,
                              const StrategyProfile& strategy, const TimeGrid& grid) {
  require_valid(spec, market);
  detail::require_strategy(spec, strategy, grid);
  const std::size_t n = spec.size();
  const double scale = (1.0 - spec.gamma) / spec.alpha;
  const std::vector<double> terminal(n, 1.0);

  VectorField lower(n, [spec, market, strategy](double s, std::span<const double> y,
                                                std::span<double> dy) {
    const detail::LinearRate rate{spec, market, strategy};
    const double common = rate.common(s);
    for (std::size_t i = 0; i < y.size(); ++i) dy[i] = -rate.agent(common, i) * y[i];
  });
  const auto bar = detail::solve_positive(lower, terminal, grid, "theta_bounds(lower)");

  BoundPair out;
  out.agent_delta.assign(n, std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      out.agent_delta[i] = std::min(out.agent_delta[i], bar.value(k, i));
    }
  }

  const bool low_risk_aversion = spec.gamma <= 1.0 - spec.alpha;
  std::vector<double> frozen(n);
  if (!low_risk_aversion) {
    const double e = ((1.0 - spec.gamma) - spec.alpha) / (1.0 - spec.gamma);
    for (std::size_t i = 0; i < n; ++i) frozen[i] = pos_pow(out.agent_delta[i], e);
  }
  VectorField upper(n, [spec, market, strategy, scale, low_risk_aversion, frozen](
                           double s, std::span<const double> y, std::span<double> dy) {
    const detail::LinearRate rate{spec, market, strategy};
    const double common = rate.common(s);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double ca = consumption_power(strategy.consumption(i, s), spec.alpha);
      const double source = low_risk_aversion ? scale * (1.0 + y[i]) * ca : scale * frozen[i] * ca;
      dy[i] = -(rate.agent(common, i) * y[i] + source);
    }
  });
  const auto top = detail::solve_positive(upper, terminal, grid, "theta_bounds(upper)");

  out.agent_kappa.assign(n, 0.0);
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      out.agent_kappa[i] = std::max(out.agent_kappa[i], top.value(k, i));
    }
  }
  out.delta = *std::min_element(out.agent_delta.begin(), out.agent_delta.end());
  out.kappa = *std::max_element(out.agent_kappa.begin(), out.agent_kappa.end());
  return out;
}

}  // namespace ezcoal
