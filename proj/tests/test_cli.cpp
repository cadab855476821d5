#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ezcoal/cli.hpp"

using namespace ezcoal;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "ezcoal_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int invoke(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "ezcoal");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& body) {
  const auto path = dir / (name + ".json");
  std::ofstream(path) << body;
  return path;
}

const char* kFig1Config = R"({
  "market": {"nu": 0.02, "mu": 0.08, "sigma": 0.15},
  "coalition": {"gamma": 0.1, "alpha": 0.3, "horizon": 1.0, "rhos": [0.01, 0.2]},
  "grid": {"n_steps": 1000},
  "mc": {"paths": 2000, "seed": 12345, "n_steps": 100}
})";

FigureDataset read_csv(const fs::path& path) {
  std::ifstream in(path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_csv(text);
}

std::size_t column(const FigureDataset& ds, const std::string& name) {
  const auto it = std::find(ds.columns.begin(), ds.columns.end(), name);
  EXPECT_NE(it, ds.columns.end()) << name;
  return static_cast<std::size_t>(it - ds.columns.begin());
}

}  // namespace

TEST(Cli, FiguresOrderings) {
  const auto dir = fresh_dir("figures");
  ASSERT_EQ(invoke({"figures", "--out", dir.string()}), 0);
  const auto f1 = read_csv(dir / "fig1.csv");
  ASSERT_EQ(f1.rows.size(), 1001u);
  const auto t1 = column(f1, "theta_1"), t2 = column(f1, "theta_2");
  const auto c1 = column(f1, "c_eq_1"), c2 = column(f1, "c_eq_2");
  for (const auto& row : f1.rows) {
    EXPECT_GE(row[t1], row[t2] - 1e-10);
    EXPECT_GE(row[c1], row[c2] - 1e-10);
  }
  const auto f2 = read_csv(dir / "fig2.csv");
  const auto d1 = column(f2, "c_eq_1"), d2 = column(f2, "c_eq_2");
  const auto o3 = column(f2, "c_one_agent_rho0"), o4 = column(f2, "c_one_agent_rho0.18");
  for (const auto& row : f2.rows) {
    EXPECT_LE(row[d1], row[d2] + 1e-10);
    EXPECT_LE(row[o3], row[o4] + 1e-10);
  }
}

TEST(Cli, FiguresBitwiseStable) {
  const auto a = fresh_dir("stable_a");
  const auto b = fresh_dir("stable_b");
  ASSERT_EQ(invoke({"figures", "--out", a.string(), "--steps", "200"}), 0);
  ASSERT_EQ(invoke({"figures", "--out", b.string(), "--steps", "200"}), 0);
  std::ifstream x(a / "fig1.csv"), y(b / "fig1.csv");
  std::stringstream sx, sy;
  sx << x.rdbuf();
  sy << y.rdbuf();
  EXPECT_EQ(sx.str(), sy.str());
  EXPECT_EQ(read_csv(a / "fig1.csv").rows.size(), 201u);
}

TEST(Cli, SolveWritesCurvesAndReports) {
  const auto dir = fresh_dir("solve");
  const auto cfg = write_config(dir, "fig1", kFig1Config);
  std::string out;
  ASSERT_EQ(invoke({"solve", "--config", cfg.string(), "--out", dir.string()}, &out), 0);
  EXPECT_TRUE(fs::exists(dir / "fig1.csv"));
  EXPECT_TRUE(fs::exists(dir / "fig1_precommitted.csv"));
  EXPECT_TRUE(fs::exists(dir / "fig1_monotonicity.txt"));
  EXPECT_NE(out.find("theta ordering: PASS"), std::string::npos);
}

TEST(Cli, VerifyFigureOne) {
  const auto dir = fresh_dir("verify");
  const auto cfg = write_config(dir, "fig1", kFig1Config);
  ASSERT_EQ(invoke({"verify", "--config", cfg.string(), "--out", dir.string()}), 0);
  const auto ds = read_csv(dir / "fig1_verification.csv");
  ASSERT_EQ(ds.rows.size(), 5u * 20u * 4u);
  const auto slope = column(ds, "slope");
  for (const auto& row : ds.rows) EXPECT_LE(row[slope], 1e-6);
}

TEST(Cli, SimulateWritesAdjudication) {
  const auto dir = fresh_dir("simulate");
  const auto cfg = write_config(dir, "fig1", kFig1Config);
  const int code = invoke({"simulate", "--config", cfg.string(), "--out", dir.string(), "--paths", "500"});
  EXPECT_TRUE(code == 0 || code == 1);
  EXPECT_TRUE(fs::exists(dir / "fig1_mc_validation.csv"));
  std::ifstream in(dir / "fig1_one_agent_adjudication.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "rho,form,theta_t0,mc_estimate,analytic,abs_diff,std_error,z_score,verdict");
}

TEST(Cli, ReportContainsTable) {
  const auto dir = fresh_dir("report");
  const auto cfg = write_config(dir, "fig1", kFig1Config);
  std::string out;
  ASSERT_EQ(invoke({"report", "--config", cfg.string(), "--out", dir.string(), "--steps", "200"}, &out), 0);
  EXPECT_NE(out.find("A1 (2*gamma*sigma): Neither"), std::string::npos);
  EXPECT_NE(out.find("pre-committed, CRRA utility"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "fig1_report.txt"));
}

TEST(Cli, ConfigErrorsExitTwo) {
  const auto dir = fresh_dir("config_errors");
  const auto unknown = write_config(dir, "unknown", R"({"market": {}, "coalition": {}, "colour": 1})");
  EXPECT_EQ(invoke({"solve", "--config", unknown.string(), "--out", dir.string()}), 2);
  const auto broken = write_config(dir, "broken", "{");
  EXPECT_EQ(invoke({"solve", "--config", broken.string(), "--out", dir.string()}), 2);
  std::string cfg = kFig1Config;
  cfg.insert(cfg.rfind('}'), R"(, "outputs": [])");
  const auto empty = write_config(dir, "empty", cfg);
  EXPECT_EQ(invoke({"solve", "--config", empty.string(), "--out", dir.string()}), 2);
  EXPECT_FALSE(fs::exists(dir / "empty.csv"));
  EXPECT_EQ(invoke({"solve", "--out", dir.string()}), 2);
  EXPECT_EQ(invoke({"bogus", "--out", dir.string()}), 2);
}

TEST(Cli, PositivityLossExitThree) {
  const auto dir = fresh_dir("positivity");
  const auto cfg = write_config(dir, "blowup", R"({
    "market": {"nu": 0.02, "mu": 0.08, "sigma": 0.15},
    "coalition": {"gamma": 0.1, "alpha": 0.3, "horizon": 1.0, "rhos": [0.0, 100000.0]},
    "grid": {"n_steps": 100}
  })");
  std::string err;
  EXPECT_EQ(invoke({"solve", "--config", cfg.string(), "--out", dir.string()}, nullptr, &err), 3);
  EXPECT_NE(err.find("A1 status"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "blowup.csv"));
}
