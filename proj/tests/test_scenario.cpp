#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ezcoal/scenario.hpp"

using namespace ezcoal;
using nlohmann::json;

namespace {

json minimal() {
  return json::parse(R"({
    "market": {"nu": 0.02, "mu": 0.08, "sigma": 0.15},
    "coalition": {"gamma": 0.1, "alpha": 0.3, "horizon": 1.0, "rhos": [0.01, 0.2]}
  })");
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "ezcoal_scenario_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(ParseScenario, Defaults) {
  const auto s = parse_scenario(minimal(), "demo");
  EXPECT_EQ(s.name, "demo");
  EXPECT_EQ(s.n_steps, 1000u);
  EXPECT_EQ(s.mc.paths, 100000u);
  EXPECT_EQ(s.mc.seed, 12345u);
  EXPECT_EQ(s.mc.n_steps, 500u);
  EXPECT_EQ(s.mc.scheme, Scheme::ExactLog);
  EXPECT_EQ(s.a1_denominator, A1Denominator::Sigma);
  EXPECT_EQ(s.one_agent_form, OneAgentOdeForm::Derived);
  EXPECT_EQ(s.outputs.size(), output_names().size());
  EXPECT_TRUE(validate_scenario(s).empty());
}

TEST(ParseScenario, AllSections) {
  auto j = minimal();
  j["name"] = "full";
  j["grid"] = {{"t0", 0.25}, {"n_steps", 64}};
  j["mc"] = {{"paths", 50}, {"seed", 9}, {"scheme", "euler_maruyama"}, {"n_steps", 40}};
  j["flags"] = {{"a1_variance_denominator", "sigma_squared"}, {"one_agent_ode_form", "as_printed"}};
  j["outputs"] = {"theta_curves", "comparison_table"};
  const auto s = parse_scenario(j, "unused");
  EXPECT_EQ(s.name, "full");
  EXPECT_EQ(s.t0, 0.25);
  EXPECT_EQ(s.grid().n_steps(), 64u);
  EXPECT_EQ(s.mc_grid().n_steps(), 40u);
  EXPECT_EQ(s.mc.scheme, Scheme::EulerMaruyama);
  EXPECT_EQ(s.a1_denominator, A1Denominator::SigmaSquared);
  EXPECT_EQ(s.one_agent_form, OneAgentOdeForm::AsPrinted);
  EXPECT_TRUE(s.wants(Output::ComparisonTable));
  EXPECT_FALSE(s.wants(Output::McValidation));
}

TEST(ParseScenario, UnknownKeysRejected) {
  auto top = minimal();
  top["extra"] = 1;
  EXPECT_THROW(parse_scenario(top, "x"), ConfigError);
  auto nested = minimal();
  nested["market"]["kappa"] = 1.0;
  EXPECT_THROW(parse_scenario(nested, "x"), ConfigError);
  auto output = minimal();
  output["outputs"] = {"plots"};
  EXPECT_THROW(parse_scenario(output, "x"), ConfigError);
}

TEST(ParseScenario, BadValuesRejected) {
  auto j = minimal();
  j["market"]["nu"] = "low";
  EXPECT_THROW(parse_scenario(j, "x"), ConfigError);
  auto k = minimal();
  k["coalition"].erase("rhos");
  EXPECT_THROW(parse_scenario(k, "x"), ConfigError);
  auto f = minimal();
  f["flags"] = {{"one_agent_ode_form", "guess"}};
  EXPECT_THROW(parse_scenario(f, "x"), ConfigError);
}

TEST(ParseScenario, OnlyUniformWeights) {
  auto j = minimal();
  j["coalition"]["weights"] = {0.5, 0.5};
  EXPECT_NO_THROW(parse_scenario(j, "x"));
  j["coalition"]["weights"] = {0.3, 0.7};
  EXPECT_THROW(parse_scenario(j, "x"), ConfigError);
}

TEST(ValidateScenario, EmptyOutputsRejected) {
  auto j = minimal();
  j["outputs"] = json::array();
  const auto s = parse_scenario(j, "x");
  const auto problems = validate_scenario(s);
  ASSERT_FALSE(problems.empty());
  EXPECT_NE(problems.front().find("output"), std::string::npos);
}

TEST(ValidateScenario, ModelViolationsSurface) {
  auto j = minimal();
  j["coalition"]["gamma"] = 1.0;
  EXPECT_FALSE(validate_scenario(parse_scenario(j, "x")).empty());
}

TEST(LoadScenario, FileErrors) {
  EXPECT_THROW(load_scenario(scratch("missing.json")), ConfigError);
  const auto path = scratch("broken.json");
  std::ofstream(path) << "{ not json";
  EXPECT_THROW(load_scenario(path), ConfigError);
  const auto good = scratch("good_name.json");
  std::ofstream(good) << minimal().dump();
  EXPECT_EQ(load_scenario(good).name, "good_name");
}

TEST(FigureScenarios, Settings) {
  const auto f1 = figure1_scenario();
  EXPECT_EQ(f1.coalition.rhos, (std::vector<double>{0.01, 0.2}));
  EXPECT_EQ(f1.market.sigma, 0.15);
  const auto f2 = figure2_scenario();
  EXPECT_EQ(f2.coalition.gamma, 0.8);
  EXPECT_EQ(f2.coalition.alpha, 0.25);
  EXPECT_EQ(f2.n_steps, 1000u);
}

TEST(FigureDataset, TwoNodeSingleAgent) {
  const CoalitionSpec spec{0.3, 0.4, 1.0, {0.05}};
  const MarketParams m{0.02, 0.08, 0.15};
  const TimeGrid g(0.0, 1.0, 1);
  const auto eq = solve_equilibrium(spec, m, g);
  const auto ds = build_figure_dataset(eq, {solve_one_agent(0.3, 0.4, 0.05, m, g)});
  EXPECT_EQ(ds.columns, (std::vector<std::string>{"t", "theta_1", "theta_one_agent_rho0.05", "c_eq_1",
                                                  "c_one_agent_rho0.05"}));
  const auto text = render_csv(ds);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_EQ(text.rfind("t,theta_1,", 0), 0u);
}

TEST(FigureDataset, RoundTripFigureOne) {
  const auto s = figure1_scenario();
  const auto eq = solve_equilibrium(s.coalition, s.market, s.grid());
  std::vector<OneAgentSolution> runs;
  for (double r : s.coalition.rhos) runs.push_back(solve_one_agent(0.1, 0.3, r, s.market, s.grid()));
  const auto ds = build_figure_dataset(eq, runs);
  const auto path = scratch("fig1_roundtrip.csv");
  emit_csv(ds, path);
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  std::ifstream in(path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto back = parse_csv(text);
  ASSERT_EQ(back.columns, ds.columns);
  ASSERT_EQ(back.rows.size(), 1001u);
  for (std::size_t r = 0; r < ds.rows.size(); ++r) {
    for (std::size_t c = 0; c < ds.columns.size(); ++c) {
      EXPECT_NEAR(back.rows[r][c], ds.rows[r][c], 1e-11 * std::max(1.0, std::abs(ds.rows[r][c])));
    }
  }
  EXPECT_EQ(render_csv(back), text);
}

TEST(FigureDataset, InvariantsEnforced) {
  FigureDataset bad{{"t", "x"}, {{0.0, 1.0}, {0.0, 2.0}}};
  EXPECT_THROW(emit_csv(bad, scratch("bad.csv")), DomainError);
  FigureDataset nan{{"t", "x"}, {{0.0, std::nan("")}}};
  EXPECT_THROW(emit_csv(nan, scratch("nan.csv")), DomainError);
  EXPECT_FALSE(std::filesystem::exists(scratch("bad.csv")));
}

TEST(FigureDataset, FilesystemErrorsSurface) {
  FigureDataset ok{{"t"}, {{0.0}}};
  EXPECT_ANY_THROW(emit_csv(ok, "/nonexistent_dir_for_test/out.csv"));
}
