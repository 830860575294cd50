#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "natkf/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"natkf: fading-memory Kalman filters and trajectory natural gradients"};
  app.require_subcommand(1);

  std::string config;
  std::string mode;
  std::optional<std::string> out;
  std::optional<double> tol;
  std::optional<std::string> mutate;

  auto* run = app.add_subcommand("run", "Run one filter and write trace.csv and summary.txt");
  run->add_option("--config", config, "Configuration file")->required();
  run->add_option("--mode", mode, "ekf, natgrad, bucy or cngd")->required();
  run->add_option("--out", out, "Output directory (overrides the config)");

  auto* compare = app.add_subcommand("compare", "Run the Kalman and natural-gradient sides and compare them");
  compare->add_option("--config", config, "Configuration file")->required();
  compare->add_option("--mode", mode, "discrete or continuous")->required();
  compare->add_option("--out", out, "Output directory (overrides the config)");
  compare->add_option("--tol", tol, "Pass threshold (overrides the config)");
  compare->add_option("--mutate", mutate, "Negative control: drop_fading_factor, half_gamma or skip_metric_transport");

  app.add_subcommand("list", "Print the built-in scenario names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : natkf::cli::kExitConfig;
  }

  const natkf::cli::Overrides overrides{out, tol, mutate};
  if (run->parsed()) return natkf::cli::cmd_run(config, mode, overrides);
  if (compare->parsed()) return natkf::cli::cmd_compare(config, mode, overrides);
  return natkf::cli::cmd_list();
}
