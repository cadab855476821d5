#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ezcoal/equilibrium.hpp"
#include "ezcoal/ode.hpp"

using namespace ezcoal;

namespace {

VectorField decay() {
  return VectorField(1, [](double, std::span<const double> y, std::span<double> dy) { dy[0] = -y[0]; });
}

VectorField zero_field(std::size_t n) {
  return VectorField(n, [](double, std::span<const double>, std::span<double> dy) {
    for (auto& d : dy) d = 0.0;
  });
}

}  // namespace

TEST(IntegrateTerminal, ExponentialBackward) {
  const std::vector<double> one{1.0};
  const auto traj = integrate_terminal(decay(), one, TimeGrid(0.0, 1.0, 100));
  EXPECT_NEAR(traj.value(0, 0), std::exp(1.0), 1e-8);
  EXPECT_EQ(traj.value(100, 0), 1.0);
}

TEST(IntegrateTerminal, ZeroFieldIsConstant) {
  const std::vector<double> c{3.25, -1.5};
  const auto traj = integrate_terminal(zero_field(2), c, TimeGrid(0.0, 2.0, 17));
  for (std::size_t k = 0; k < traj.grid().n_nodes(); ++k) {
    EXPECT_EQ(traj.value(k, 0), 3.25);
    EXPECT_EQ(traj.value(k, 1), -1.5);
  }
}

TEST(IntegrateTerminal, LinearBoundOdeMatchesExponential) {
  // theta' = -a theta with a = (1-g)(nu - rho/alpha), the source-free comparison equation
  const double g = 0.3, nu = 0.05, rho = 0.02, alpha = 0.4;
  const double a = (1.0 - g) * (nu - rho / alpha);
  VectorField f(1, [a](double, std::span<const double> y, std::span<double> dy) { dy[0] = -a * y[0]; });
  const std::vector<double> one{1.0};
  const auto traj = integrate_terminal(f, one, TimeGrid(0.0, 2.0, 200));
  for (std::size_t k = 0; k < traj.grid().n_nodes(); ++k) {
    EXPECT_NEAR(traj.value(k, 0), std::exp(a * (2.0 - traj.grid().node(k))), 1e-8);
  }
}

TEST(IntegrateTerminal, DimensionMismatch) {
  const std::vector<double> two{1.0, 2.0};
  EXPECT_THROW(integrate_terminal(decay(), two, TimeGrid(0.0, 1.0, 4)), DimensionMismatch);
}

TEST(IntegrateTerminal, NonFiniteReportsNode) {
  // y' = -k y^3 blows up backward at s = 1 - 1/(2k)
  VectorField f(1, [](double, std::span<const double> y, std::span<double> dy) { dy[0] = -y[0] * y[0] * y[0] * 1e6; });
  const std::vector<double> one{1.0};
  try {
    integrate_terminal(f, one, TimeGrid(0.0, 1.0, 10));
    FAIL() << "expected NonFiniteState";
  } catch (const NonFiniteState& e) {
    EXPECT_LT(e.node(), 10u);
    EXPECT_EQ(e.component(), 0u);
  }
}

TEST(IntegrateTerminal, BitwiseDeterministic) {
  const std::vector<double> one{1.0};
  const auto a = integrate_terminal(decay(), one, TimeGrid(0.0, 1.0, 37));
  const auto b = integrate_terminal(decay(), one, TimeGrid(0.0, 1.0, 37));
  for (std::size_t k = 0; k < a.grid().n_nodes(); ++k) EXPECT_EQ(a.value(k, 0), b.value(k, 0));
}

TEST(DenseOutput, ExactAtNodesAccurateBetween) {
  const std::vector<double> one{1.0};
  const auto traj = integrate_terminal(decay(), one, TimeGrid(0.0, 1.0, 100));
  for (std::size_t k = 0; k < traj.grid().n_nodes(); ++k) {
    EXPECT_EQ(traj.at(traj.grid().node(k), 0), traj.value(k, 0));
  }
  for (double t : {0.013, 0.377, 0.5, 0.9991}) {
    EXPECT_NEAR(traj.at(t, 0), std::exp(1.0 - t), 1e-8);
  }
  EXPECT_THROW(traj.at(1.5, 0), DomainError);
}

TEST(ObservedOrder, DecayIsFourth) {
  const std::vector<double> one{1.0};
  const auto est = observed_order(decay(), one, TimeGrid(0.0, 1.0, 8));
  EXPECT_FALSE(est.exact);
  EXPECT_GE(est.order, 3.8);
  EXPECT_LE(est.order, 4.2);
}

TEST(ObservedOrder, ZeroFieldIsExact) {
  const std::vector<double> c{2.0};
  const auto est = observed_order(zero_field(1), c, TimeGrid(0.0, 1.0, 4));
  EXPECT_TRUE(est.exact);
  EXPECT_EQ(est.coarse_error, 0.0);
}

TEST(ObservedOrder, RejectsOddSteps) {
  const std::vector<double> one{1.0};
  EXPECT_THROW(observed_order(decay(), one, TimeGrid(0.0, 1.0, 7)), DomainError);
}

TEST(ObservedOrder, HalvingShrinksLinearErrorFourteenfold) {
  const double a = 1.3;
  VectorField f(1, [a](double, std::span<const double> y, std::span<double> dy) { dy[0] = -a * y[0]; });
  const std::vector<double> one{1.0};
  const double exact = std::exp(a);
  const double e1 = std::abs(integrate_terminal(f, one, TimeGrid(0.0, 1.0, 10)).value(0, 0) - exact);
  const double e2 = std::abs(integrate_terminal(f, one, TimeGrid(0.0, 1.0, 20)).value(0, 0) - exact);
  EXPECT_GE(e1 / e2, 14.0);
}

TEST(ObservedOrder, EquilibriumFieldFigureOne) {
  const CoalitionSpec spec{0.1, 0.3, 1.0, {0.01, 0.2}};
  const MarketParams market{0.02, 0.08, 0.15};
  const std::vector<double> ones(2, 1.0);
  const auto est = observed_order(equilibrium_field(spec, market), ones, TimeGrid(0.0, 1.0, 16));
  EXPECT_GE(est.order, 3.8);
}
