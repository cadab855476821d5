#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "ezcoal/errors.hpp"
#include "ezcoal/model.hpp"

namespace ezcoal {

/// dy/ds = f(s, y) for a state of fixed dimension. Must be deterministic.
class VectorField {
 public:
  using Eval = std::function<void(double, std::span<const double>, std::span<double>)>;

  VectorField(std::size_t dimension, Eval eval) : dim_(dimension), eval_(std::move(eval)) {
    if (dimension == 0) throw DimensionMismatch("vector field needs a positive dimension");
  }

  std::size_t dimension() const noexcept { return dim_; }
  void operator()(double t, std::span<const double> y, std::span<double> dy) const {
    eval_(t, y, dy);
  }

 private:
  std::size_t dim_;
  Eval eval_;
};

/// Node values and derivatives of a solved system, with cubic Hermite dense output.
class Trajectory {
 public:
  Trajectory(TimeGrid grid, std::size_t dimension)
      : grid_(grid),
        dim_(dimension),
        values_(grid.n_nodes() * dimension),
        derivs_(grid.n_nodes() * dimension) {}

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t dimension() const noexcept { return dim_; }

  std::span<const double> state(std::size_t node) const {
    return {values_.data() + node * dim_, dim_};
  }
  std::span<const double> derivative(std::size_t node) const {
    return {derivs_.data() + node * dim_, dim_};
  }
  std::span<double> state(std::size_t node) { return {values_.data() + node * dim_, dim_}; }
  std::span<double> derivative(std::size_t node) { return {derivs_.data() + node * dim_, dim_}; }

  double value(std::size_t node, std::size_t component) const {
    return values_[node * dim_ + component];
  }

  /// Dense output of one component. Exact node values at node times.
  double at(double t, std::size_t component) const {
    if (!grid_.contains(t)) {
      std::ostringstream msg;
      msg << "dense output requested at t=" << t << " outside [" << grid_.t0() << ", "
          << grid_.t_end() << "]";
      throw DomainError(msg.str());
    }
    if (t == grid_.t_end()) return value(grid_.n_steps(), component);
    const std::size_t k = grid_.interval(t);
    const double h = grid_.dt();
    const double u = (t - grid_.node(k)) / h;
    if (u == 0.0) return value(k, component);
    const double y0 = values_[k * dim_ + component];
    const double y1 = values_[(k + 1) * dim_ + component];
    const double d0 = derivs_[k * dim_ + component];
    const double d1 = derivs_[(k + 1) * dim_ + component];
    const double u2 = u * u;
    const double u3 = u2 * u;
    const double h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    const double h10 = u3 - 2.0 * u2 + u;
    const double h01 = -2.0 * u3 + 3.0 * u2;
    const double h11 = u3 - u2;
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
  }

  void at(double t, std::span<double> out) const {
    for (std::size_t i = 0; i < dim_; ++i) out[i] = at(t, i);
  }

  std::vector<double> at(double t) const {
    std::vector<double> out(dim_);
    at(t, out);
    return out;
  }

 private:
  TimeGrid grid_;
  std::size_t dim_;
  std::vector<double> values_;
  std::vector<double> derivs_;
};

namespace detail {

inline void require_finite(std::span<const double> v, std::size_t node, double t,
                           const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      std::ostringstream msg;
      msg << "non-finite " << what << " component " << i << " at node " << node << " (t=" << t
          << ")";
      throw NonFiniteState(node, t, i, msg.str());
    }
  }
}

}  // namespace detail

/// Classical RK4 stepped backward from the terminal state at T to t0.
inline Trajectory integrate_terminal(const VectorField& field, std::span<const double> terminal,
                                     const TimeGrid& grid) {
  const std::size_t dim = field.dimension();
  if (terminal.size() != dim) {
    throw DimensionMismatch("terminal state dimension does not match the vector field");
  }
  Trajectory traj(grid, dim);
  const std::size_t n = grid.n_steps();
  std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);

  auto last = traj.state(n);
  std::copy(terminal.begin(), terminal.end(), last.begin());
  detail::require_finite(last, n, grid.node(n), "state");

  for (std::size_t k = n; k > 0; --k) {
    const double s1 = grid.node(k);
    const double s0 = grid.node(k - 1);
    const double h = s0 - s1;
    auto y = traj.state(k);
    field(s1, y, k1);
    detail::require_finite(k1, k, s1, "derivative");
    std::copy(k1.begin(), k1.end(), traj.derivative(k).begin());

    for (std::size_t i = 0; i < dim; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
    field(s1 + 0.5 * h, tmp, k2);
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
    field(s1 + 0.5 * h, tmp, k3);
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = y[i] + h * k3[i];
    field(s0, tmp, k4);

    auto next = traj.state(k - 1);
    for (std::size_t i = 0; i < dim; ++i) {
      next[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    detail::require_finite(next, k - 1, s0, "state");
  }
  field(grid.node(0), traj.state(0), traj.derivative(0));
  detail::require_finite(traj.derivative(0), 0, grid.node(0), "derivative");
  return traj;
}

/// Result of a step-halving study. `exact` is set when both error estimates vanish.
struct OrderEstimate {
  bool exact = false;
  double order = 0.0;
  double coarse_error = 0.0;
  double fine_error = 0.0;
};

/// log2(err(h)/err(h/2)) with errors measured at t0 against an h/4 reference.
inline OrderEstimate observed_order(const VectorField& field, std::span<const double> terminal,
                                    const TimeGrid& grid) {
  if (grid.n_steps() % 2 != 0) throw DomainError("observed_order needs an even step count");
  const TimeGrid half(grid.t0(), grid.t_end(), grid.n_steps() * 2);
  const TimeGrid quarter(grid.t0(), grid.t_end(), grid.n_steps() * 4);
  const auto coarse = integrate_terminal(field, terminal, grid);
  const auto fine = integrate_terminal(field, terminal, half);
  const auto ref = integrate_terminal(field, terminal, quarter);

  OrderEstimate est;
  for (std::size_t i = 0; i < field.dimension(); ++i) {
    est.coarse_error = std::max(est.coarse_error, std::abs(coarse.value(0, i) - ref.value(0, i)));
    est.fine_error = std::max(est.fine_error, std::abs(fine.value(0, i) - ref.value(0, i)));
  }
  if (est.coarse_error == 0.0 && est.fine_error == 0.0) {
    est.exact = true;
    return est;
  }
  est.order = std::log2(est.coarse_error / est.fine_error);
  return est;
}

}  // namespace ezcoal
