#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ezcoal/equilibrium.hpp"
#include "ezcoal/errors.hpp"
#include "ezcoal/model.hpp"
#include "ezcoal/montecarlo.hpp"
#include "ezcoal/ode.hpp"
#include "ezcoal/recursive_utility.hpp"

namespace ezcoal {

inline const char* to_string(OneAgentOdeForm f) {
  return f == OneAgentOdeForm::Derived ? "derived" : "as_printed";
}

/// Optimal strategy of a single agent with discount rate rho.
class OneAgentSolution {
 public:
  OneAgentSolution(ThetaSystem theta, double pi_star, OneAgentOdeForm form)
      : theta_(std::make_shared<const ThetaSystem>(std::move(theta))),
        pi_star_(pi_star),
        form_(form) {}

  const ThetaSystem& theta() const noexcept { return *theta_; }
  double rho() const noexcept { return theta_->spec().rhos.front(); }
  double pi_star() const noexcept { return pi_star_; }
  OneAgentOdeForm form() const noexcept { return form_; }

  /// c*(t) = theta(t)^{-alpha/((1-alpha)(1-gamma))}.
  double consumption(double t) const { return consumption_of((*theta_)(t, 0)); }
  double consumption_at_node(std::size_t node) const {
    return consumption_of(theta_->at_node(node, 0));
  }

  StrategyProfile strategy() const {
    std::vector<Schedule> pi{constant_schedule(pi_star_)};
    std::vector<Schedule> c{[self = *this](double t) { return self.consumption(t); }};
    return {std::move(pi), std::move(c)};
  }

 private:
  double consumption_of(double th) const {
    const auto& s = theta_->spec();
    return pos_pow(th, -s.alpha / ((1.0 - s.alpha) * (1.0 - s.gamma)));
  }

  std::shared_ptr<const ThetaSystem> theta_;
  double pi_star_;
  OneAgentOdeForm form_;
};

/// Derived: the one-agent specialization of the coalition equilibrium equation, nonlinear term
/// (1/a - 1)(1-g) theta^{1 - a/((1-a)(1-g))}. AsPrinted: same with exponent -a/((1-g)(1-a)).
inline OneAgentSolution solve_one_agent(double gamma, double alpha, double rho,
                                        const MarketParams& market, const TimeGrid& grid,
                                        OneAgentOdeForm form = OneAgentOdeForm::Derived) {
  CoalitionSpec spec{gamma, alpha, grid.t_end(), {rho}};
  require_valid(spec, market);
  const double g1 = 1.0 - gamma;
  const double excess = market.mu - market.nu;
  const double growth = market.nu + excess * excess / (2.0 * gamma * market.sigma * market.sigma);
  const double base_exp = -alpha / ((1.0 - alpha) * g1);
  const double exponent = form == OneAgentOdeForm::Derived ? 1.0 + base_exp : base_exp;
  const double source = (1.0 / alpha - 1.0) * g1;
  VectorField field(1, [=](double, std::span<const double> y, std::span<double> dy) {
    dy[0] = -(g1 * y[0] * growth - g1 * rho / alpha * y[0] + source * pos_pow(y[0], exponent));
  });
  const std::vector<double> terminal{1.0};
  auto traj = detail::solve_positive(field, terminal, grid, "solve_one_agent");
  return {ThetaSystem(std::move(traj), spec, ThetaProvenance::OneAgent),
          market.merton_fraction(gamma), form};
}

/// Monte Carlo adjudication of a one-agent solution through the utility representation.
inline AgentUtilityCheck one_agent_mc_oracle(const OneAgentSolution& sol,
                                             const MarketParams& market, double x0,
                                             const TimeGrid& grid, std::size_t n_paths,
                                             std::uint64_t seed, unsigned threads = 0) {
  if (!(grid == sol.theta().grid())) {
    throw GridMismatch("one-agent solution and simulation grid differ");
  }
  const auto strategy = sol.strategy();
  const auto paths = simulate_wealth(market, strategy, x0, grid, n_paths, seed, Scheme::ExactLog,
                                     threads);
  return check_utility_representation(sol.theta().spec(), market, strategy, sol.theta(), paths,
                                      threads)
      .agents.front();
}

enum class PrecommitOdeForm { Derived, AsPrinted };

/// Pre-committed optimum of the CRRA (gamma = 1 - alpha) coalition problem anchored at time t.
class PrecommittedSolution {
 public:
  PrecommittedSolution(ThetaSystem theta, double anchor, double total_investment)
      : theta_(std::make_shared<const ThetaSystem>(std::move(theta))),
        anchor_(anchor),
        total_investment_(total_investment) {}

  double anchor() const noexcept { return anchor_; }
  const ThetaSystem& theta() const noexcept { return *theta_; }
  const CoalitionSpec& spec() const noexcept { return theta_->spec(); }
  double total_investment() const noexcept { return total_investment_; }

  /// c_i(s) = (N theta(s) / e^{-alpha rho_i (s - t)})^{1/(alpha-1)}.
  double consumption(std::size_t i, double s) const { return consumption_of(i, s, (*theta_)(s, 0)); }
  double consumption_at_node(std::size_t i, std::size_t node) const {
    return consumption_of(i, theta_->grid().node(node), theta_->at_node(node, 0));
  }

  StrategyProfile strategy() const {
    const std::size_t n = spec().size();
    std::vector<Schedule> pi(n, constant_schedule(total_investment_ / static_cast<double>(n)));
    std::vector<Schedule> c;
    for (std::size_t i = 0; i < n; ++i) {
      c.emplace_back([self = *this, i](double s) { return self.consumption(i, s); });
    }
    return {std::move(pi), std::move(c)};
  }

 private:
  double consumption_of(std::size_t i, double s, double th) const {
    const auto& sp = spec();
    const double n = static_cast<double>(sp.size());
    const double discount = std::exp(-sp.alpha * sp.rhos[i] * (s - anchor_));
    return pos_pow(n * th / discount, 1.0 / (sp.alpha - 1.0));
  }

  std::shared_ptr<const ThetaSystem> theta_;
  double anchor_;
  double total_investment_;
};

/// Scalar value-factor equation of the pre-committed problem on [anchor, T]. The Derived form
/// keeps the riskless-rate term alpha*nu*theta produced by the dynamic programming step;
/// AsPrinted drops it.
inline PrecommittedSolution solve_precommitted_crra(const CoalitionSpec& spec,
                                                    const MarketParams& market, double anchor,
                                                    std::size_t n_steps,
                                                    PrecommitOdeForm form = PrecommitOdeForm::Derived) {
  require_valid(spec, market);
  if (!spec.is_crra()) throw NotCRRA("pre-committed CRRA problem requires gamma = 1 - alpha");
  if (!(anchor >= 0.0 && anchor < spec.horizon)) {
    throw DomainError("anchor time must lie in [0, T)");
  }
  const TimeGrid grid(anchor, spec.horizon, n_steps);
  const double a = spec.alpha;
  const double n = static_cast<double>(spec.size());
  const double excess = market.mu - market.nu;
  double linear = a * excess * excess / (2.0 * (1.0 - a) * market.sigma * market.sigma);
  if (form == PrecommitOdeForm::Derived) linear += a * market.nu;
  const double scale = (1.0 - a) * std::pow(n, 1.0 / (a - 1.0));
  const double power = a / (a - 1.0);
  VectorField field(1, [rhos = spec.rhos, a, anchor, linear, scale, power](
                           double s, std::span<const double> y, std::span<double> dy) {
    double weights = 0.0;
    for (double r : rhos) weights += std::exp(a * r * (s - anchor) / (a - 1.0));
    dy[0] = -(linear * y[0] + scale * weights * pos_pow(y[0], power));
  });
  double terminal = 0.0;
  for (double r : spec.rhos) terminal += std::exp(-a * r * (spec.horizon - anchor));
  terminal /= n;
  const std::vector<double> term{terminal};
  auto traj = detail::solve_positive(field, term, grid, "solve_precommitted_crra");
  return {ThetaSystem(std::move(traj), spec, ThetaProvenance::PrecommittedCRRA), anchor,
          excess / ((1.0 - a) * market.sigma * market.sigma)};
}

/// Largest |c_i(t) - c_j(t)| over agents and grid nodes.
inline double consumption_spread(const EquilibriumSolution& sol) {
  double spread = 0.0;
  for (std::size_t k = 0; k < sol.grid().n_nodes(); ++k) {
    const auto c = sol.consumption_at_node(k);
    const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
    spread = std::max(spread, *hi - *lo);
  }
  return spread;
}

/// Equilibrium under CRRA preferences; consumption must come out identical across agents.
inline EquilibriumSolution crra_equilibrium(const CoalitionSpec& spec, const MarketParams& market,
                                            const TimeGrid& grid) {
  if (!spec.is_crra()) throw NotCRRA("crra_equilibrium requires gamma = 1 - alpha");
  auto sol = solve_equilibrium(spec, market, grid);
  const double spread = consumption_spread(sol);
  if (spread > 1e-10) {
    std::ostringstream msg;
    msg << "CRRA equilibrium consumption differs across agents by " << spread;
    throw Error(msg.str());
  }
  return sol;
}

/// One row of the consumption-strategy comparison: measured time-consistency gap (same strategy
/// re-solved from a later anchor) and heterogeneity spread across agents.
struct ComparisonRow {
  std::string strategy;
  double consistency_gap = 0.0;
  double heterogeneity = 0.0;
  bool time_consistent = false;
  bool heterogeneous = false;
};

/// Pre-committed CRRA vs equilibrium CRRA vs equilibrium recursive. The CRRA rows use
/// gamma' = 1 - alpha with the same alpha and discount rates. `n_steps` must be even.
inline std::vector<ComparisonRow> comparison_table(const CoalitionSpec& spec,
                                                   const MarketParams& market,
                                                   std::size_t n_steps, double tol = 1e-10) {
  if (n_steps % 2 != 0) throw DomainError("comparison_table needs an even step count");
  CoalitionSpec crra = spec;
  crra.gamma = 1.0 - spec.alpha;
  const double mid = 0.5 * spec.horizon;
  const TimeGrid full(0.0, spec.horizon, n_steps);
  const TimeGrid late(mid, spec.horizon, n_steps / 2);
  std::vector<ComparisonRow> rows;

  {
    ComparisonRow row{"pre-committed, CRRA utility"};
    const auto early = solve_precommitted_crra(crra, market, 0.0, n_steps);
    const auto later = solve_precommitted_crra(crra, market, mid, n_steps / 2);
    for (std::size_t k = 0; k < late.n_nodes(); ++k) {
      for (std::size_t i = 0; i < crra.size(); ++i) {
        row.consistency_gap =
            std::max(row.consistency_gap, std::abs(early.consumption_at_node(i, k + n_steps / 2) -
                                                   later.consumption_at_node(i, k)));
        for (std::size_t j = 0; j < crra.size(); ++j) {
          row.heterogeneity = std::max(
              row.heterogeneity,
              std::abs(later.consumption_at_node(i, k) - later.consumption_at_node(j, k)));
        }
      }
    }
    rows.push_back(row);
  }

  auto equilibrium_row = [&](const std::string& label, const CoalitionSpec& s) {
    ComparisonRow row{label};
    const auto early = solve_equilibrium(s, market, full);
    const auto later = solve_equilibrium(s, market, late);
    for (std::size_t k = 0; k < late.n_nodes(); ++k) {
      const auto a = early.consumption_at_node(k + n_steps / 2);
      const auto b = later.consumption_at_node(k);
      for (std::size_t i = 0; i < a.size(); ++i) {
        row.consistency_gap = std::max(row.consistency_gap, std::abs(a[i] - b[i]));
      }
    }
    row.heterogeneity = consumption_spread(early);
    return row;
  };
  rows.push_back(equilibrium_row("equilibrium, CRRA utility", crra));
  rows.push_back(equilibrium_row("equilibrium, recursive utility", spec));

  for (auto& row : rows) {
    row.time_consistent = row.consistency_gap <= tol;
    row.heterogeneous = row.heterogeneity > tol;
  }
  return rows;
}

/// Across one-agent runs sharing a grid, a larger discount rate must not consume less.
inline OrderingReport check_one_agent_ordering(const std::vector<OneAgentSolution>& runs,
                                               double slack = 1e-10) {
  OrderingReport out;
  out.regime = "one-agent consumption increasing in rho";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (std::size_t j = 0; j < runs.size(); ++j) {
      if (i == j || runs[i].rho() > runs[j].rho()) continue;
      if (!(runs[i].theta().grid() == runs[j].theta().grid())) {
        throw GridMismatch("one-agent runs must share one grid");
      }
      const auto& grid = runs[i].theta().grid();
      for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
        const double a = runs[i].consumption_at_node(k);
        const double b = runs[j].consumption_at_node(k);
        if (a > b + slack) {
          out.pass = false;
          std::ostringstream msg;
          msg << "t=" << grid.node(k) << ": c*(rho=" << runs[i].rho() << ")=" << a
              << " > c*(rho=" << runs[j].rho() << ")=" << b;
          out.counterexamples.push_back(msg.str());
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace ezcoal
