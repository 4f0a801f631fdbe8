#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "avgspde/experiments.hpp"

using namespace avgspde;

namespace {

const std::string kConfigDir = AVGSPDE_CONFIG_DIR;
const std::string kCli = AVGSPDE_CLI_PATH;

nlohmann::json bench_json()
{
  std::ifstream in(kConfigDir + "/bench.json");
  return nlohmann::json::parse(in);
}

ExperimentConfig small_mc_config(std::size_t samples)
{
  auto j = bench_json();
  j["mode"] = "mc";
  j["sim"]["samples"] = samples;
  j["eps_grid"] = {0.125, 0.0625, 0.03125};
  return parse_config(j);
}

struct Run {
  int status;
  std::string output;
};

Run run(const std::string& args)
{
  const std::string cmd = "'" + kCli + "' " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  std::string out;
  char buf[512];
  while (std::fgets(buf, sizeof buf, p)) out += buf;
  const int st = pclose(p);
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

std::string config_error(const nlohmann::json& j)
{
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(FitOrder, ExactPowerLaws)
{
  std::vector<WeakRow> rows;
  for (int k = 3; k <= 9; ++k) {
    const double e = std::ldexp(1.0, -k);
    rows.push_back({e, 0.37 * e, 0.0});
  }
  auto f = fit_order(rows);
  EXPECT_NEAR(f.slope, 1.0, 1e-12);
  EXPECT_NEAR(f.std_error, 0.0, 1e-12);
  EXPECT_EQ(f.rows, 7u);
  for (auto& r : rows) r.weak_err = std::sqrt(r.eps);
  EXPECT_NEAR(fit_order(rows).slope, 0.5, 1e-12);
}

TEST(FitOrder, PerturbedAndDegenerate)
{
  std::vector<WeakRow> rows;
  for (int k = 3; k <= 9; ++k) {
    const double e = std::ldexp(1.0, -k);
    rows.push_back({e, e * (k % 2 ? 1.05 : 0.95), 0.0});
  }
  const auto f = fit_order(rows);
  EXPECT_NEAR(f.slope, 1.0, 0.05);
  EXPECT_GT(f.std_error, 0.0);
  rows.resize(2);
  EXPECT_THROW(fit_order(rows), EstimationFailure);
  std::vector<WeakRow> zeros{{0.5, 0.0, 0.0}, {0.25, 0.0, 0.0}, {0.125, 1.0, 0.0}};
  EXPECT_THROW(fit_order(zeros), EstimationFailure);
}

TEST(WeakOrder, GaussianBenchmarkIsFirstOrder)
{
  const auto rep = run_weak_order(parse_config(bench_json()));
  ASSERT_EQ(rep.status, ReportStatus::Ok);
  EXPECT_GE(rep.fitted_order, 0.9);
  EXPECT_LE(rep.fitted_order, 1.1);
  ASSERT_EQ(rep.rows.size(), 7u);
  for (std::size_t i = 1; i < rep.rows.size(); ++i)
    EXPECT_LT(rep.rows[i].weak_err, rep.rows[i - 1].weak_err);
  EXPECT_EQ(rep.usable_rows, 7u);
  EXPECT_NE(rep.summary().find("order=1."), std::string::npos);
}

TEST(WeakOrder, DecoupledIsDegenerateZero)
{
  auto j = bench_json();
  j["model"]["drift"]["b"] = 0.0;
  const auto rep = run_weak_order(parse_config(j));
  EXPECT_EQ(rep.status, ReportStatus::DegenerateZero);
  for (const auto& r : rep.rows) EXPECT_EQ(r.weak_err, 0.0);
  EXPECT_NE(rep.summary().find("degenerate-zero"), std::string::npos);
}

TEST(WeakOrder, InconclusiveWhenNoiseDominates)
{
  WeakOrderReport rep;
  rep.mode = WeakMode::MonteCarlo;
  rep.rows = {{0.5, 0.01, 0.01}, {0.25, 0.02, 0.001}, {0.125, 0.001, 0.01}};
  finish_report(rep);
  EXPECT_EQ(rep.status, ReportStatus::Inconclusive);
  EXPECT_EQ(rep.usable_rows, 1u);
  EXPECT_TRUE(std::isnan(rep.fitted_order));
}

TEST(WeakOrder, ThreadCountDoesNotChangeOutput)
{
  const auto cfg = small_mc_config(64);
  EXPECT_EQ(run_weak_order(cfg, 1).csv(), run_weak_order(cfg, 8).csv());
  auto mcfg = cfg;
  mcfg.diagnostics.paths = 64;
  EXPECT_EQ(curve_csv(mixing_study(mcfg, 1).curve), curve_csv(mixing_study(mcfg, 8).curve));
}

TEST(Config, RoundTrip)
{
  const auto c = parse_config(bench_json());
  EXPECT_EQ(c.model.modes, 8u);
  EXPECT_EQ(std::get<LinearDrift>(c.model.drift).c, std::vector<double>(8, 0.5));
  EXPECT_EQ(c.y0, std::vector<double>(8, 0.0));
  const auto c2 = parse_config(serialize(c));
  EXPECT_TRUE(c == c2);
  EXPECT_EQ(serialize(c).dump(), serialize(c2).dump());
  const auto c3 = parse_config_text(serialize(c).dump(2));
  EXPECT_TRUE(c == c3);
}

TEST(Config, Rejections)
{
  auto j = bench_json();
  j["model"]["drift"]["colour"] = 1;
  EXPECT_NE(config_error(j).find("model.drift.colour"), std::string::npos);

  j = bench_json();
  j["eps_grid"] = {0.1, 0.2};
  EXPECT_NE(config_error(j).find("strictly decreasing"), std::string::npos);
  j["eps_grid"] = {1.5};
  EXPECT_NE(config_error(j).find("eps_grid"), std::string::npos);
  j["eps_grid"] = nlohmann::json::array();
  EXPECT_NE(config_error(j).find("eps_grid"), std::string::npos);

  j = bench_json();
  j["x0"] = {1, 2, 3};
  EXPECT_NE(config_error(j).find("x0"), std::string::npos);

  j = bench_json();
  j["model"]["drift"]["c"] = -3.0;
  EXPECT_NE(config_error(j).find("hypothesis"), std::string::npos);

  j = bench_json();
  j["phi"] = {{"family", "rational"}};
  EXPECT_NE(config_error(j).find("gaussian"), std::string::npos);
  j["mode"] = "mc";
  EXPECT_EQ(config_error(j), "");

  j = bench_json();
  j["schema_version"] = 2;
  EXPECT_NE(config_error(j).find("schema_version"), std::string::npos);
}

TEST(Config, MalformedJsonReportsPosition)
{
  try {
    parse_config_text("{\n  \"model\": {\n    \"length\": ,\n  }\n}");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("line 3"), std::string::npos) << m;
    EXPECT_NE(m.find("column"), std::string::npos) << m;
  }
}

TEST(Config, MissingFileNamesPath)
{
  try {
    load_config("/nonexistent/cfg.json");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/cfg.json"), std::string::npos);
  }
}

TEST(Csv, HeadersAndRoundTripDigits)
{
  EXPECT_EQ(fmt17(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(fmt17(1.0 / 3.0)), 1.0 / 3.0);
  WeakOrderReport rep;
  rep.rows = {{0.125, 1.0 / 3.0, 0.0}};
  EXPECT_EQ(rep.csv(), "eps,weak_err,stderr\n0.125,0.33333333333333331,0\n");
  EXPECT_EQ(curve_csv({}), "t,gap,stderr\n");
  EXPECT_EQ(residual_csv({}), "eps,u_eps_minus_ubar,scaled_residual\n");
  EXPECT_EQ(fbar_csv({{1, 0.5, 0.25, 0.0}}), "mode,closed_form,ergodic,stderr\n1,0.5,0.25,0\n");
}

TEST(Cli, MissingConfigExitsTwo)
{
  const auto r = run("weak-order --config /nonexistent/cfg.json");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("/nonexistent/cfg.json"), std::string::npos) << r.output;
  EXPECT_EQ(run("weak-order").status, 2);
  EXPECT_EQ(run("--bogus").status, 2);
  EXPECT_EQ(run("--help").status, 0);
}

TEST(Cli, GaussianWeakOrder)
{
  const auto r = run("weak-order --config " + kConfigDir + "/bench.json");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.output.find("eps,weak_err,stderr"), std::string::npos);
  EXPECT_NE(r.output.find("order=1."), std::string::npos) << r.output;
}

TEST(Cli, OutputFileAndSummary)
{
  const auto path = (std::filesystem::temp_directory_path() / "avgspde_cli_test.csv").string();
  std::filesystem::remove(path);
  const auto r = run("weak-order --config " + kConfigDir + "/decoupled.json --out " + path);
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.output.find("degenerate-zero"), std::string::npos) << r.output;
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "eps,weak_err,stderr");
  std::filesystem::remove(path);
}

TEST(Cli, FbarDecoupledIsExact)
{
  const auto r = run("fbar --config " + kConfigDir + "/decoupled.json");
  ASSERT_EQ(r.status, 0) << r.output;
  std::istringstream is(r.output);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "mode,closed_form,ergodic,stderr");
  int n = 0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string mode, cf, erg, se;
    std::getline(ls, mode, ',');
    std::getline(ls, cf, ',');
    std::getline(ls, erg, ',');
    std::getline(ls, se, ',');
    // a time average of a constant is exact up to summation roundoff
    EXPECT_NEAR(std::stod(erg), std::stod(cf), 1e-12 * (1.0 + std::abs(std::stod(cf)))) << line;
    EXPECT_LT(std::stod(se), 1e-14) << line;
    ++n;
  }
  EXPECT_EQ(n, 8);
}

TEST(Cli, SimulateIsReproducible)
{
  const std::string args = "simulate --kind coupled --sample 3 --eps 0.0625 --config " + kConfigDir + "/bench.json";
  const auto a = run(args), b = run(args + " --threads 4");
  EXPECT_EQ(a.status, 0);
  EXPECT_EQ(a.output, b.output);
  EXPECT_NE(a.output.find("mode,x,y"), std::string::npos);
  EXPECT_NE(run(args + " --seed 9").output, a.output);
}

TEST(Cli, ExpansionRequiresLinearCosine)
{
  const auto r = run("expansion --config " + kConfigDir + "/bench.json");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.output.find("eps,u_eps_minus_ubar,scaled_residual"), std::string::npos);
}
