#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "ezcoal/model.hpp"

using namespace ezcoal;

namespace {

bool mentions(const std::vector<std::string>& v, const std::string& text) {
  return std::any_of(v.begin(), v.end(), [&](const auto& s) { return s.find(text) != std::string::npos; });
}

const MarketParams kFig1Market{0.02, 0.08, 0.15};

}  // namespace

TEST(Validate, AcceptsPlainSetting) {
  EXPECT_TRUE(validate({0.5, 0.5, 1.0, {0.01}}, kFig1Market).empty());
}

TEST(Validate, RejectsGammaAtOne) {
  EXPECT_TRUE(mentions(validate({1.0, 0.5, 1.0, {0.01}}, kFig1Market), "gamma must lie in (0,1)"));
}

TEST(Validate, RejectsZeroSigma) {
  EXPECT_TRUE(mentions(validate({0.5, 0.5, 1.0, {0.01}}, {0.02, 0.08, 0.0}), "sigma must be positive"));
}

TEST(Validate, ReportsEveryViolation) {
  const auto v = validate({1.5, 0.0, -1.0, {-0.1}}, {0.1, 0.05, -1.0});
  EXPECT_GE(v.size(), 5u);
  EXPECT_EQ(v, validate({1.5, 0.0, -1.0, {-0.1}}, {0.1, 0.05, -1.0}));
}

TEST(Validate, RejectsEmptyCoalition) {
  EXPECT_FALSE(validate({0.5, 0.5, 1.0, {}}, kFig1Market).empty());
  EXPECT_THROW(require_valid({0.5, 0.5, 1.0, {}}, kFig1Market), DomainError);
}

TEST(ClassifyA1, FigureTwoIsBranchTwo) {
  const auto s = classify_a1({0.8, 0.25, 1.0, {0.0, 0.18}}, {0.1, 0.2, 0.05});
  EXPECT_TRUE(s.branch_two);
}

TEST(ClassifyA1, FigureOneIsNeitherAsPrinted) {
  const auto s = classify_a1({0.1, 0.3, 1.0, {0.01, 0.2}}, kFig1Market);
  EXPECT_NEAR(s.rho_threshold, 0.126, 1e-12);
  EXPECT_FALSE(s.branch_one);
  EXPECT_FALSE(s.branch_two);
  EXPECT_EQ(s.label(), "Neither");
}

TEST(ClassifyA1, SquaredDenominatorRaisesThreshold) {
  const auto s = classify_a1({0.1, 0.3, 1.0, {0.01, 0.2}}, kFig1Market, A1Denominator::SigmaSquared);
  EXPECT_NEAR(s.rho_threshold, 0.006 + 0.0036 / 0.0045, 1e-12);
  EXPECT_TRUE(s.branch_one);
}

TEST(ClassifyA1, ZeroRatesAlwaysBranchOne) {
  for (double g : {0.05, 0.4, 0.95}) {
    EXPECT_TRUE(classify_a1({g, 0.3, 1.0, {0.0, 0.0}}, kFig1Market).branch_one);
  }
}

TEST(ClassifyA1, BothBranchesReported) {
  const auto s = classify_a1({0.8, 0.25, 1.0, {0.0}}, {0.1, 0.2, 0.05});
  EXPECT_EQ(s.label(), "BranchOne+BranchTwo");
}

TEST(ClassifyA1, MonotoneInRho) {
  CoalitionSpec spec{0.1, 0.3, 1.0, {0.01, 0.05}};
  bool prev = classify_a1(spec, kFig1Market).branch_one;
  for (double r = 0.05; r < 0.5; r += 0.01) {
    spec.rhos[1] = r;
    const bool now = classify_a1(spec, kFig1Market).branch_one;
    EXPECT_FALSE(!prev && now);
    prev = now;
  }
}

TEST(TimeGrid, UniformNodesEndExactly) {
  const TimeGrid g(0.0, 1.0, 3);
  EXPECT_EQ(g.n_nodes(), 4u);
  EXPECT_DOUBLE_EQ(g.dt(), 1.0 / 3.0);
  EXPECT_EQ(g.node(3), 1.0);
  const auto nodes = g.nodes();
  EXPECT_TRUE(std::is_sorted(nodes.begin(), nodes.end()));
  EXPECT_EQ(g.interval(0.5), 1u);
  EXPECT_EQ(g.interval(1.0), 2u);
}

TEST(TimeGrid, RejectsDegenerate) {
  EXPECT_THROW(TimeGrid(1.0, 1.0, 4), DomainError);
  EXPECT_THROW(TimeGrid(0.0, 1.0, 0), DomainError);
}

TEST(Schedule, PiecewiseConstantIsRightContinuous) {
  const TimeGrid g(0.0, 1.0, 2);
  const auto s = grid_schedule(g, {1.0, 2.0, 3.0}, Interpolation::PiecewiseConstant);
  EXPECT_EQ(s(0.0), 1.0);
  EXPECT_EQ(s(0.49), 1.0);
  EXPECT_EQ(s(0.5), 2.0);
  EXPECT_EQ(s(1.0), 3.0);
}

TEST(Schedule, PiecewiseLinearInterpolates) {
  const TimeGrid g(0.0, 1.0, 2);
  const auto s = grid_schedule(g, {1.0, 2.0, 3.0}, Interpolation::PiecewiseLinear);
  EXPECT_NEAR(s(0.25), 1.5, 1e-15);
  EXPECT_NEAR(s(0.75), 2.5, 1e-15);
}

TEST(Schedule, RejectsNegativeValues) {
  EXPECT_THROW(constant_schedule(-1.0), DomainError);
  const TimeGrid g(0.0, 1.0, 1);
  EXPECT_THROW(grid_schedule(g, {1.0, -2.0}, Interpolation::PiecewiseLinear), DomainError);
}

TEST(StrategyProfile, SumsAgents) {
  const auto p = StrategyProfile::constant({1.0, 2.0}, {0.1, 0.3});
  EXPECT_EQ(p.size(), 2u);
  EXPECT_DOUBLE_EQ(p.total_investment(0.4), 3.0);
  EXPECT_DOUBLE_EQ(p.total_consumption(0.4), 0.4);
  EXPECT_NO_THROW(p.check_admissible(TimeGrid(0.0, 1.0, 10)));
}

TEST(StrategyProfile, FlagsNegativeFeedback) {
  StrategyProfile p({[](double t) { return 1.0 - 2.0 * t; }}, {constant_schedule(0.0)});
  EXPECT_THROW(p.check_admissible(TimeGrid(0.0, 1.0, 10)), DomainError);
}

TEST(MarketParams, MertonFraction) {
  EXPECT_NEAR(kFig1Market.merton_fraction(0.1), 0.06 / (0.1 * 0.0225), 1e-12);
}
