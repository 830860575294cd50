#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "natkf/cli.hpp"

using namespace natkf;
using namespace natkf::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(NATKF_TEST_SCRATCH) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& body) {
  const fs::path p = dir / "run.cfg";
  std::ofstream(p) << body;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

// Header width, row widths, finiteness, and no "nan" anywhere.
void expect_well_formed(const fs::path& csv, std::size_t rows, std::size_t width) {
  const auto ls = lines(csv);
  ASSERT_EQ(ls.size(), rows + 1) << csv;
  EXPECT_EQ(split(ls[0]).size(), width) << ls[0];
  for (std::size_t i = 1; i < ls.size(); ++i) {
    const auto cells = split(ls[i]);
    ASSERT_EQ(cells.size(), width) << "row " << i;
    for (const auto& c : cells) EXPECT_TRUE(std::isfinite(std::stod(c))) << c;
  }
  EXPECT_EQ(slurp(csv).find("nan"), std::string::npos);
}

std::string summary_value(const fs::path& summary, const std::string& key) {
  for (const auto& line : lines(summary)) {
    if (line.rfind(key + " = ", 0) == 0) return line.substr(key.size() + 3);
  }
  return {};
}

}  // namespace

TEST(Config, ParsesEveryKey) {
  std::istringstream in(R"(# comment
scenario = tanhspring
family = gaussian
R = 0.2, 0.3
T = 12
seed = 9
s0 = 0.1, 0.2
truth_s0 = 1, -1
P0 = 2
alpha = ramp(0, 0.5)
alpha[3] = 0.7
eta0 = 0.25
fisher_mode = monte-carlo(4)
out = somewhere
tol = 1e-9
mutate = half_gamma
)");
  const RunConfig cfg = parse_config(in);
  EXPECT_EQ(cfg.scenario, "tanhspring");
  EXPECT_EQ(*cfg.family, "gaussian");
  EXPECT_EQ(cfg.noise, (std::vector<double>{0.2, 0.3}));
  EXPECT_EQ(cfg.discrete_horizon(), 12u);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.s0, (std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(cfg.p0, (std::vector<double>{2.0}));
  EXPECT_EQ(cfg.alpha.kind, AlphaSpec::Kind::ramp);
  EXPECT_DOUBLE_EQ(cfg.alpha.discrete(12)(3), 0.7);
  EXPECT_DOUBLE_EQ(cfg.alpha.discrete(12)(12), 0.5);
  EXPECT_DOUBLE_EQ(cfg.alpha.discrete(12)(1), 0.0);
  EXPECT_EQ(cfg.eta0, 0.25);
  EXPECT_EQ(cfg.fisher, natgrad::FisherMode::monte_carlo);
  EXPECT_EQ(cfg.mc_samples, 4u);
  EXPECT_EQ(cfg.out, "somewhere");
  EXPECT_EQ(cfg.tol, 1e-9);
  EXPECT_EQ(cfg.mutate, equivalence::Mutation::half_gamma);
}

TEST(Config, AlphaForms) {
  std::istringstream list("scenario = static\nalpha = 0.1, 0.2, 0.3\n");
  const RunConfig cfg = parse_config(list);
  const Schedule a = cfg.alpha.discrete(5);
  EXPECT_DOUBLE_EQ(a(1), 0.1);
  EXPECT_DOUBLE_EQ(a(3), 0.3);
  EXPECT_DOUBLE_EQ(a(5), 0.3);
  EXPECT_THROW(cfg.alpha.continuous(1.0), ConfigError);
  std::istringstream ramp("scenario = pendulum-ct\nalpha = ramp(0, 1)\nT = 2\n");
  const TimeFunction c = parse_config(ramp).alpha.continuous(2.0);
  EXPECT_DOUBLE_EQ(c(1.0), 0.5);
  EXPECT_DOUBLE_EQ(c(5.0), 1.0);
}

TEST(Config, Errors) {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
  };
  try {
    parse("T = 5\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("scenario"), std::string::npos);
  }
  EXPECT_THROW(parse("scenario = static\ncolour = blue\n"), ConfigError);
  EXPECT_THROW(parse("scenario = static\nT = abc\n"), ConfigError);
  EXPECT_THROW(parse("scenario = static\neta0 = 0\n"), ConfigError);
  EXPECT_THROW(parse("scenario = static\neta0 = 1.5\n"), ConfigError);
  EXPECT_THROW(parse("scenario = static\nP0 = -1\n"), ConfigError);
  EXPECT_THROW(parse("scenario = static\nfisher_mode = guess\n"), ConfigError);
  EXPECT_THROW(parse("scenario = static\nmutate = everything\n"), ConfigError);
  EXPECT_THROW(parse("scenario = static\nno equals sign\n"), ConfigError);
  EXPECT_THROW(parse("scenario = static\nT = 2.5\n").discrete_horizon(), ConfigError);
}

TEST(Cli, ListIsSorted) {
  std::ostringstream out;
  EXPECT_EQ(cmd_list(out), kExitOk);
  std::vector<std::string> names;
  std::istringstream in(out.str());
  for (std::string n; std::getline(in, n);) names.push_back(n);
  EXPECT_TRUE(std::is_sorted(names.begin(), names.end()));
  EXPECT_NE(std::find(names.begin(), names.end(), "static"), names.end());
  EXPECT_NE(std::find(names.begin(), names.end(), "pendulum-ct"), names.end());
}

TEST(Cli, RunWritesOneRowPerStep) {
  const fs::path dir = scratch("run");
  const fs::path cfg = write_config(dir, "scenario = linear2d\nT = 15\nalpha = 0.1\nseed = 2\nout = " +
                                             (dir / "out").string() + "\n");
  std::ostringstream err;
  ASSERT_EQ(cmd_run(cfg.string(), "ekf", {}, err), kExitOk) << err.str();
  // t, s_true×2, y×1, s_ekf×2, P_diag×2
  expect_well_formed(dir / "out" / "trace.csv", 16, 8);
  EXPECT_TRUE(fs::exists(dir / "out" / "summary.txt"));
  EXPECT_TRUE(fs::exists(dir / "out" / "scenario.csv"));

  ASSERT_EQ(cmd_run(cfg.string(), "natgrad", {}, err), kExitOk) << err.str();
  // t, s_true×2, y×1, s_ngd×2, J_diag×2, eta
  expect_well_formed(dir / "out" / "trace.csv", 16, 9);
}

TEST(Cli, ContinuousRuns) {
  const fs::path dir = scratch("run_ct");
  const fs::path cfg = write_config(dir, "scenario = pendulum-ct\nT = 0.5\ndt = 0.01\nalpha = 0.2\n");
  std::ostringstream err;
  ASSERT_EQ(cmd_run(cfg.string(), "bucy", {dir / "bucy", {}, {}}, err), kExitOk) << err.str();
  expect_well_formed(dir / "bucy" / "trace.csv", 51, 6);
  ASSERT_EQ(cmd_run(cfg.string(), "cngd", {dir / "cngd", {}, {}}, err), kExitOk) << err.str();
  expect_well_formed(dir / "cngd" / "trace.csv", 51, 7);
  EXPECT_EQ(cmd_run(cfg.string(), "ekf", {dir / "wrong", {}, {}}, err), kExitConfig);
}

TEST(Cli, CompareDiscretePassesAndMutationFails) {
  const fs::path dir = scratch("compare");
  const fs::path cfg = write_config(dir, "scenario = linear2d\nT = 50\nalpha = 0.1\n");
  std::ostringstream err;
  ASSERT_EQ(cmd_compare(cfg.string(), "discrete", {dir / "ok", {}, {}}, err), kExitOk) << err.str();
  // t, s_true×2, y, s_ekf×2, s_ngd×2, state_dev, metric_dev
  expect_well_formed(dir / "ok" / "trace.csv", 51, 10);
  EXPECT_EQ(summary_value(dir / "ok" / "summary.txt", "passed"), "true");
  EXPECT_LE(std::stod(summary_value(dir / "ok" / "summary.txt", "max_state_dev")), 1e-8);

  for (const char* m : {"drop_fading_factor", "half_gamma", "skip_metric_transport"}) {
    EXPECT_EQ(cmd_compare(cfg.string(), "discrete", {dir / m, {}, std::string(m)}, err), kExitTolerance) << m;
    EXPECT_EQ(summary_value(dir / m / "summary.txt", "passed"), "false");
  }
}

TEST(Cli, CompareContinuousReportsEveryStep) {
  const fs::path dir = scratch("compare_ct");
  const fs::path cfg = write_config(dir, "scenario = pendulum-ct\nalpha = 0.2\ndt_list = 1e-2, 1e-3, 1e-4\n");
  std::ostringstream err;
  ASSERT_EQ(cmd_compare(cfg.string(), "continuous", {dir / "out", 1e-6, {}}, err), kExitOk) << err.str();
  const fs::path summary = dir / "out" / "summary.txt";
  for (int i = 0; i < 3; ++i) {
    EXPECT_FALSE(summary_value(summary, "dt[" + std::to_string(i) + "]").empty());
    EXPECT_FALSE(summary_value(summary, "max_state_dev[" + std::to_string(i) + "]").empty());
  }
  EXPECT_GE(std::stod(summary_value(summary, "state_order")), 1.0);
  expect_well_formed(dir / "out" / "convergence.csv", 3, 5);
}

TEST(Cli, ExitCodesForBadInput) {
  const fs::path dir = scratch("bad");
  std::ostringstream err;
  EXPECT_EQ(cmd_run(write_config(dir, "T = 5\n").string(), "ekf", {dir / "o", {}, {}}, err), kExitConfig);
  EXPECT_NE(err.str().find("scenario"), std::string::npos);
  EXPECT_EQ(cmd_run((dir / "missing.cfg").string(), "ekf", {dir / "o", {}, {}}, err), kExitConfig);
  EXPECT_EQ(cmd_run(write_config(dir, "scenario = nowhere\n").string(), "ekf", {dir / "o", {}, {}}, err),
            kExitConfig);
  EXPECT_EQ(cmd_run(write_config(dir, "scenario = linear2d\n").string(), "dance", {dir / "o", {}, {}}, err),
            kExitConfig);
  // Predicted probability pinned to 0 makes the observation covariance singular.
  EXPECT_EQ(cmd_run(write_config(dir, "scenario = logistic-static\ns0 = -1000, 0\nT = 5\n").string(), "ekf",
                    {dir / "o", {}, {}}, err),
            kExitNumerical);
}

TEST(Cli, OutputsAreByteIdentical) {
  const fs::path dir = scratch("repeat");
  const fs::path cfg = write_config(dir, "scenario = tanhspring\nT = 30\nalpha = ramp(0, 0.5)\nseed = 5\n");
  std::ostringstream err;
  ASSERT_EQ(cmd_compare(cfg.string(), "discrete", {dir / "a", {}, {}}, err), kExitOk) << err.str();
  ASSERT_EQ(cmd_compare(cfg.string(), "discrete", {dir / "b", {}, {}}, err), kExitOk) << err.str();
  for (const char* f : {"trace.csv", "summary.txt", "scenario.csv"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
}

TEST(Cli, ScenarioCsvRoundTrip) {
  const fs::path dir = scratch("scenario");
  const DynamicalModel m = make_tanhspring_model();
  const Scenario sc = generate_scenario(m, m.nominal_family, 20, 8);
  write_scenario_csv(dir / "sc.csv", sc);
  const Scenario back = read_scenario_csv(dir / "sc.csv", m, m.nominal_family, 8);
  ASSERT_EQ(back.horizon(), 20u);
  for (std::size_t t = 0; t <= 20; ++t) EXPECT_EQ(back.true_states[t], sc.true_states[t]);
  for (std::size_t t = 1; t <= 20; ++t) EXPECT_EQ(back.observation(t), sc.observation(t));
  EXPECT_THROW(read_scenario_csv(dir / "sc.csv", make_linear2d_model(), ObservationFamily::gaussian(1.0)),
               ConfigError);
}

TEST(Cli, ImportedScenarioReproducesRun) {
  const fs::path dir = scratch("import");
  std::ostringstream err;
  const fs::path first = write_config(dir, "scenario = linear2d\nT = 10\nalpha = 0.1\nseed = 4\n");
  ASSERT_EQ(cmd_run(first.string(), "ekf", {dir / "a", {}, {}}, err), kExitOk) << err.str();
  const fs::path second = write_config(
      dir, "scenario = linear2d\nalpha = 0.1\nscenario_file = " + (dir / "a" / "scenario.csv").string() + "\n");
  ASSERT_EQ(cmd_run(second.string(), "ekf", {dir / "b", {}, {}}, err), kExitOk) << err.str();
  EXPECT_EQ(slurp(dir / "a" / "trace.csv"), slurp(dir / "b" / "trace.csv"));
}

TEST(Cli, NumberFormatRoundTrips) {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) EXPECT_EQ(std::stod(format_number(x)), x);
}
