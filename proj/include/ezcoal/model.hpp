#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ezcoal/errors.hpp"

namespace ezcoal {

/// Single risky asset plus a bank account.
struct MarketParams {
  double nu = 0.0;     // riskless rate
  double mu = 0.0;     // appreciation rate of the stock
  double sigma = 0.0;  // volatility

  /// Merton fraction (mu - nu) / (gamma sigma^2).
  double merton_fraction(double gamma) const {
    return (mu - nu) / (gamma * sigma * sigma);
  }
};

/// Preferences shared by the coalition plus one discount rate per agent.
/// Pareto weights are uniform (1/N) and are not configurable.
struct CoalitionSpec {
  double gamma = 0.5;    // relative risk aversion, in (0,1)
  double alpha = 0.5;    // EIS is 1/(1-alpha), alpha in (0,1)
  double horizon = 1.0;  // terminal time T
  std::vector<double> rhos;

  std::size_t size() const noexcept { return rhos.size(); }

  /// True when the aggregator is additively separable (CRRA expected utility).
  bool is_crra() const noexcept { return gamma == 1.0 - alpha; }

  /// Exponent (1-g-a)/((1-a)(1-g)) applied to theta_i in the equilibrium consumption rule.
  double consumption_exponent() const noexcept {
    return ((1.0 - gamma) - alpha) / ((1.0 - alpha) * (1.0 - gamma));
  }
};

enum class A1Denominator { Sigma, SigmaSquared };
enum class OneAgentOdeForm { Derived, AsPrinted };

inline std::vector<std::string> validate(const CoalitionSpec& spec, const MarketParams& market) {
  std::vector<std::string> out;
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(market.nu) || !finite(market.mu) || !finite(market.sigma)) {
    out.emplace_back("market parameters must be finite");
  }
  if (!(market.mu > market.nu)) out.emplace_back("mu must exceed nu");
  if (!(market.sigma > 0.0)) out.emplace_back("sigma must be positive");
  if (!(spec.gamma > 0.0 && spec.gamma < 1.0)) out.emplace_back("gamma must lie in (0,1)");
  if (!(spec.alpha > 0.0 && spec.alpha < 1.0)) out.emplace_back("alpha must lie in (0,1)");
  if (!(spec.horizon > 0.0) || !finite(spec.horizon)) {
    out.emplace_back("horizon must be positive and finite");
  }
  if (spec.rhos.empty()) out.emplace_back("at least one agent (discount rate) is required");
  for (std::size_t i = 0; i < spec.rhos.size(); ++i) {
    if (!(spec.rhos[i] >= 0.0) || !finite(spec.rhos[i])) {
      std::ostringstream msg;
      msg << "discount rate rho_" << (i + 1) << " must be finite and nonnegative";
      out.push_back(msg.str());
    }
  }
  return out;
}

inline void require_valid(const CoalitionSpec& spec, const MarketParams& market) {
  auto violations = validate(spec, market);
  if (violations.empty()) return;
  std::string msg = "invalid parameters:";
  for (const auto& v : violations) msg += " " + v + ";";
  throw DomainError(msg);
}

/// Which of the two sufficient well-posedness conditions hold.
struct A1Status {
  bool branch_one = false;  // max rho <= alpha nu + (mu-nu)^2/(2 gamma sigma[^2])
  bool branch_two = false;  // gamma in [1-alpha, 1)
  double rho_threshold = 0.0;
  std::string detail;

  bool any() const noexcept { return branch_one || branch_two; }

  std::string label() const {
    if (branch_one && branch_two) return "BranchOne+BranchTwo";
    if (branch_one) return "BranchOne";
    if (branch_two) return "BranchTwo";
    return "Neither";
  }
};

inline A1Status classify_a1(const CoalitionSpec& spec, const MarketParams& market,
                            A1Denominator denominator = A1Denominator::Sigma) {
  A1Status status;
  const double excess = market.mu - market.nu;
  const double vol = denominator == A1Denominator::Sigma ? market.sigma
                                                         : market.sigma * market.sigma;
  status.rho_threshold = spec.alpha * market.nu + excess * excess / (2.0 * spec.gamma * vol);
  const double max_rho =
      spec.rhos.empty() ? 0.0 : *std::max_element(spec.rhos.begin(), spec.rhos.end());
  const bool gamma_ok = spec.gamma > 0.0 && spec.gamma < 1.0;
  status.branch_one = gamma_ok && max_rho <= status.rho_threshold;
  status.branch_two = spec.gamma >= 1.0 - spec.alpha && spec.gamma < 1.0;

  std::ostringstream msg;
  msg << "max rho = " << max_rho << " vs threshold " << status.rho_threshold
      << (denominator == A1Denominator::Sigma ? " (2*gamma*sigma)" : " (2*gamma*sigma^2)")
      << "; gamma = " << spec.gamma << " vs 1-alpha = " << 1.0 - spec.alpha << " -> "
      << status.label();
  status.detail = msg.str();
  return status;
}

/// Uniform grid t0 = s_0 < ... < s_n = T.
class TimeGrid {
 public:
  TimeGrid(double t0, double t_end, std::size_t n_steps) : t0_(t0), t_end_(t_end), n_(n_steps) {
    if (n_steps == 0) throw DomainError("time grid needs at least one step");
    if (!(t_end > t0) || !std::isfinite(t0) || !std::isfinite(t_end)) {
      throw DomainError("time grid requires finite t0 < T");
    }
    dt_ = (t_end - t0) / static_cast<double>(n_steps);
  }

  double t0() const noexcept { return t0_; }
  double t_end() const noexcept { return t_end_; }
  std::size_t n_steps() const noexcept { return n_; }
  std::size_t n_nodes() const noexcept { return n_ + 1; }
  double dt() const noexcept { return dt_; }

  double node(std::size_t k) const noexcept {
    return k >= n_ ? t_end_ : t0_ + static_cast<double>(k) * dt_;
  }

  std::vector<double> nodes() const {
    std::vector<double> out(n_nodes());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = node(k);
    return out;
  }

  /// Index k of the interval [s_k, s_{k+1}) containing t, clamped to [0, n-1].
  std::size_t interval(double t) const noexcept {
    if (t <= t0_) return 0;
    auto k = static_cast<std::size_t>((t - t0_) / dt_);
    if (k >= n_) return n_ - 1;
    // guard rounding at the upper edge of an interval
    if (t < node(k)) --k;
    else if (k + 1 < n_ && t >= node(k + 1)) ++k;
    return k;
  }

  bool contains(double t) const noexcept { return t >= t0_ && t <= t_end_; }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) noexcept {
    return a.t0_ == b.t0_ && a.t_end_ == b.t_end_ && a.n_ == b.n_;
  }

 private:
  double t0_;
  double t_end_;
  std::size_t n_;
  double dt_;
};

enum class Interpolation { PiecewiseConstant, PiecewiseLinear };

/// A nonnegative function of time.
using Schedule = std::function<double(double)>;

inline Schedule constant_schedule(double value) {
  if (!(value >= 0.0) || !std::isfinite(value)) {
    throw DomainError("strategy values must be finite and nonnegative");
  }
  return [value](double) { return value; };
}

/// Grid-valued schedule; piecewise constant is right-continuous.
inline Schedule grid_schedule(const TimeGrid& grid, std::vector<double> values,
                              Interpolation interp = Interpolation::PiecewiseConstant) {
  if (values.size() != grid.n_nodes()) {
    throw DimensionMismatch("schedule needs one value per grid node");
  }
  for (double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DomainError("strategy values must be finite and nonnegative");
    }
  }
  auto data = std::make_shared<const std::vector<double>>(std::move(values));
  return [grid, data, interp](double t) {
    const auto& v = *data;
    if (t >= grid.t_end()) return v.back();
    const std::size_t k = grid.interval(t);
    if (interp == Interpolation::PiecewiseConstant) return v[k];
    const double u = std::clamp((t - grid.node(k)) / grid.dt(), 0.0, 1.0);
    return v[k] + u * (v[k + 1] - v[k]);
  };
}

/// Per-agent feedback investment and consumption fractions as functions of time.
class StrategyProfile {
 public:
  StrategyProfile() = default;
  StrategyProfile(std::vector<Schedule> investment, std::vector<Schedule> consumption)
      : invest_(std::move(investment)), consume_(std::move(consumption)) {
    if (invest_.size() != consume_.size()) {
      throw DimensionMismatch("investment and consumption need the same number of agents");
    }
  }

  static StrategyProfile constant(const std::vector<double>& investment,
                                  const std::vector<double>& consumption) {
    std::vector<Schedule> pi;
    std::vector<Schedule> c;
    for (double v : investment) pi.push_back(constant_schedule(v));
    for (double v : consumption) c.push_back(constant_schedule(v));
    return {std::move(pi), std::move(c)};
  }

  static StrategyProfile zero(std::size_t n_agents) {
    return constant(std::vector<double>(n_agents, 0.0), std::vector<double>(n_agents, 0.0));
  }

  std::size_t size() const noexcept { return invest_.size(); }
  double investment(std::size_t i, double t) const { return invest_[i](t); }
  double consumption(std::size_t i, double t) const { return consume_[i](t); }

  double total_investment(double t) const {
    double s = 0.0;
    for (const auto& f : invest_) s += f(t);
    return s;
  }
  double total_consumption(double t) const {
    double s = 0.0;
    for (const auto& f : consume_) s += f(t);
    return s;
  }

  /// Samples every node and midpoint; throws DomainError on a negative or non-finite value.
  void check_admissible(const TimeGrid& grid) const {
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
      const double t = grid.node(k);
      check_at(t);
      if (k + 1 < grid.n_nodes()) check_at(t + 0.5 * grid.dt());
    }
  }

 private:
  void check_at(double t) const {
    for (std::size_t i = 0; i < size(); ++i) {
      const double p = invest_[i](t);
      const double c = consume_[i](t);
      if (!(p >= 0.0) || !std::isfinite(p) || !(c >= 0.0) || !std::isfinite(c)) {
        std::ostringstream msg;
        msg << "strategy of agent " << (i + 1) << " is not finite and nonnegative at t=" << t;
        throw DomainError(msg.str());
      }
    }
  }

  std::vector<Schedule> invest_;
  std::vector<Schedule> consume_;
};

}  // namespace ezcoal
