// Batch front-end: run a filter or a side-by-side comparison from a config
// file and write CSV traces plus a `key = value` summary.
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure,
// 3 comparison outside tolerance.
//
// CSV: header row, `,` separator, `\n` line endings, numbers with 17
// significant digits. Discrete traces have one row per t = 0..T; observation
// columns hold 0 in the t = 0 row, which carries no observation.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "natkf/bucy.hpp"
#include "natkf/config.hpp"
#include "natkf/ekf.hpp"
#include "natkf/equivalence.hpp"
#include "natkf/errors.hpp"
#include "natkf/model.hpp"
#include "natkf/natgrad.hpp"

namespace natkf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitTolerance = 3;

/// Command-line values that take precedence over the config file.
struct Overrides {
  std::optional<std::string> out;
  std::optional<double> tol;
  std::optional<std::string> mutate;
};

inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw ConfigError("cannot write '" + path.string() + "'");
  }

  void header(const std::vector<std::string>& names) {
    columns_ = names.size();
    write_fields(names);
  }

  void row(const std::vector<double>& values) {
    if (values.size() != columns_) throw DomainError("csv row width does not match its header");
    std::vector<std::string> fields;
    fields.reserve(values.size());
    for (double v : values) fields.push_back(format_number(v));
    write_fields(fields);
  }

 private:
  void write_fields(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
  }

  std::ofstream out_;
  std::size_t columns_ = 0;
};

/// Ordered `key = value` lines.
class Summary {
 public:
  void add(const std::string& key, const std::string& value) { lines_.emplace_back(key, value); }
  void add(const std::string& key, double value) { add(key, format_number(value)); }
  void add(const std::string& key, const Vector& v) {
    std::string text;
    for (Index i = 0; i < v.size(); ++i) text += (i ? ", " : "") + format_number(v(i));
    add(key, text);
  }
  void add_flag(const std::string& key, bool value) { add(key, std::string(value ? "true" : "false")); }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    for (const auto& [k, v] : lines_) out << k << " = " << v << '\n';
  }

 private:
  std::vector<std::pair<std::string, std::string>> lines_;
};

namespace detail {

inline std::vector<std::string> indexed(const std::string& prefix, Index n) {
  std::vector<std::string> names;
  for (Index i = 0; i < n; ++i) names.push_back(prefix + "_" + std::to_string(i));
  return names;
}

inline void append(std::vector<std::string>& a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
}

inline void append(std::vector<double>& a, const Vector& v) {
  a.insert(a.end(), v.data(), v.data() + v.size());
}

inline Vector diagonal_of(const SymMatrix& m) { return m.matrix().diagonal(); }

}  // namespace detail

/// Ground truth and observations as CSV: t, s_true_*, y_* for t = 0..T.
inline void write_scenario_csv(const std::filesystem::path& path, const Scenario& sc) {
  CsvWriter csv(path);
  std::vector<std::string> names{"t"};
  detail::append(names, detail::indexed("s_true", sc.model.dim_state));
  detail::append(names, detail::indexed("y", sc.family.obs_dim()));
  csv.header(names);
  for (std::size_t t = 0; t <= sc.horizon(); ++t) {
    std::vector<double> row{static_cast<double>(t)};
    detail::append(row, sc.true_states.at(t));
    detail::append(row, t == 0 ? Vector(Vector::Zero(sc.family.obs_dim())) : sc.observation(t));
    csv.row(row);
  }
}

/// Reads a file written by write_scenario_csv back into a scenario of `model`.
inline Scenario read_scenario_csv(const std::filesystem::path& path, const DynamicalModel& model,
                                  const ObservationFamily& family, std::uint64_t seed = 0) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read scenario file '" + path.string() + "'");
  const Index n = model.dim_state;
  const Index m = family.obs_dim();
  const auto width = static_cast<std::size_t>(1 + n + m);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("scenario file is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() != width) {
    throw ConfigError("scenario file has " + std::to_string(header.size()) + " columns, expected " +
                      std::to_string(width));
  }
  Scenario sc{model, family, {}, {}, seed};
  std::size_t expected_t = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) values.push_back(detail::parse_double("scenario file", cell));
    if (values.size() != width) throw ConfigError("scenario file: ragged row at t=" + std::to_string(expected_t));
    if (values[0] != static_cast<double>(expected_t)) throw ConfigError("scenario file: rows out of order");
    sc.true_states.emplace_back(Eigen::Map<const Vector>(values.data() + 1, n));
    if (expected_t > 0) {
      Observation y = Eigen::Map<const Vector>(values.data() + 1 + n, m);
      sufficient_stats(family, y);  // validates support
      sc.observations.push_back(std::move(y));
    }
    ++expected_t;
  }
  if (sc.true_states.empty()) throw ConfigError("scenario file has no rows");
  return sc;
}

namespace detail {

struct DiscreteSetup {
  Scenario scenario;
  Vector s0;
  SymMatrix p0;
  Schedule alpha;
};

inline DiscreteSetup discrete_setup(const RunConfig& cfg, const std::string& mode) {
  DynamicalModel model;
  try {
    model = builtin_discrete(cfg.scenario);
  } catch (const UnknownModel& e) {
    throw ConfigError(std::string(e.what()) + " (mode " + mode + " needs a discrete-time scenario)");
  }
  const Index n = model.dim_state;
  model.nominal_initial_state = state_vector(cfg.truth_s0, n, "truth_s0", model.nominal_initial_state);
  const ObservationFamily family = resolve_family(cfg, model);
  if (family.mean_dim() != model.dim_mean) {
    throw ConfigError("family " + family.describe() + " does not fit scenario " + model.name);
  }
  const std::size_t horizon = cfg.discrete_horizon();
  Scenario scenario = cfg.scenario_file
                          ? read_scenario_csv(*cfg.scenario_file, model, family, cfg.seed)
                      : horizon == 0
                          ? Scenario{model, family, {model.nominal_initial_state}, {}, cfg.seed}
                          : generate_scenario(model, family, horizon, cfg.seed);
  DiscreteSetup setup{std::move(scenario), state_vector(cfg.s0, n, "s0", Vector::Zero(n)),
                      SymMatrix::diagonal(expand_diagonal(cfg.p0, n, "P0")), {}};
  setup.alpha = cfg.alpha.discrete(setup.scenario.horizon());
  for (std::size_t t = 1; t <= setup.scenario.horizon(); ++t) {
    if (!(setup.alpha(t) >= 0.0)) throw ConfigError("alpha must be non-negative");
  }
  return setup;
}

inline ContinuousModel continuous_model(const RunConfig& cfg, const std::string& mode) {
  ContinuousModel model;
  try {
    model = builtin_continuous(cfg.scenario);
  } catch (const UnknownModel& e) {
    throw ConfigError(std::string(e.what()) + " (mode " + mode + " needs a continuous-time scenario)");
  }
  if (!cfg.noise.empty()) {
    const SymMatrix r = SymMatrix::diagonal(expand_diagonal(cfg.noise, model.dim_obs, "R"));
    if (!(r.matrix().diagonal().array() > 0.0).all()) throw ConfigError("R must be positive");
    model.noise_cov = [r](double) { return r; };
  }
  return model;
}

inline std::vector<std::string> head_columns(const Scenario& sc) {
  std::vector<std::string> names{"t"};
  append(names, indexed("s_true", sc.model.dim_state));
  append(names, indexed("y", sc.family.obs_dim()));
  return names;
}

inline std::vector<double> head_values(const Scenario& sc, std::size_t t) {
  std::vector<double> row{static_cast<double>(t)};
  append(row, sc.true_states.at(t));
  append(row, t == 0 ? Vector(Vector::Zero(sc.family.obs_dim())) : sc.observation(t));
  return row;
}

inline natgrad::NatGradConfig natgrad_config(const RunConfig& cfg, const equivalence::HyperMap& hyper) {
  natgrad::NatGradConfig g;
  g.eta = cfg.eta ? constant_schedule(*cfg.eta) : hyper.eta_schedule();
  g.gamma = cfg.gamma ? constant_schedule(*cfg.gamma) : hyper.gamma_schedule();
  g.fisher = cfg.fisher;
  g.mc_samples = cfg.mc_samples;
  return g;
}

inline void common_summary(Summary& s, const std::string& command, const std::string& mode,
                           const RunConfig& cfg) {
  s.add("command", command);
  s.add("mode", mode);
  s.add("scenario", cfg.scenario);
  s.add("seed", std::to_string(cfg.seed));
}

inline void apply(RunConfig& cfg, const Overrides& o) {
  if (o.out) cfg.out = *o.out;
  if (o.tol) {
    if (!(*o.tol > 0.0)) throw ConfigError("--tol must be positive");
    cfg.tol = *o.tol;
  }
  if (o.mutate) cfg.mutate = equivalence::parse_mutation(*o.mutate);
}

inline std::filesystem::path prepare_out(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec) throw ConfigError("cannot create output directory '" + cfg.out + "': " + ec.message());
  return cfg.out;
}

}  // namespace detail

/// Runs `body` and maps library exceptions onto exit codes, reporting to `err`.
inline int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UnknownModel& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const OutOfSupport& e) {
    err << "invalid observation: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SingularMatrix& e) {
    err << "numerical failure (singular matrix): " << e.what() << '\n';
    return kExitNumerical;
  } catch (const NonFinite& e) {
    err << "numerical failure (non-finite value): " << e.what() << '\n';
    return kExitNumerical;
  } catch (const PositivityLost& e) {
    err << "numerical failure (positivity lost): " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DomainError& e) {
    err << "numerical failure (domain): " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

inline int run_with(RunConfig cfg, const std::string& mode, const Overrides& overrides = {}) {
  detail::apply(cfg, overrides);
  Summary summary;
  detail::common_summary(summary, "run", mode, cfg);

  if (mode == "ekf" || mode == "natgrad") {
    const detail::DiscreteSetup setup = detail::discrete_setup(cfg, mode);
    const Scenario& sc = setup.scenario;
    const Index n = sc.model.dim_state;
    const auto out = detail::prepare_out(cfg);
    summary.add("family", sc.family.describe());
    summary.add("T", std::to_string(sc.horizon()));
    write_scenario_csv(out / "scenario.csv", sc);

    CsvWriter csv(out / "trace.csv");
    std::vector<std::string> names = detail::head_columns(sc);
    if (mode == "ekf") {
      ekf::EkfConfig kcfg;
      kcfg.alpha = setup.alpha;
      const ekf::FilterTrace trace = ekf::run(sc, kcfg, setup.s0, setup.p0);
      detail::append(names, detail::indexed("s_ekf", n));
      detail::append(names, detail::indexed("P_diag", n));
      csv.header(names);
      for (std::size_t t = 0; t <= sc.horizon(); ++t) {
        std::vector<double> row = detail::head_values(sc, t);
        detail::append(row, trace.at(t).mean);
        detail::append(row, detail::diagonal_of(trace.at(t).cov));
        csv.row(row);
      }
      summary.add("final_state", trace.at(sc.horizon()).mean);
      summary.add("final_cov_diag", detail::diagonal_of(trace.at(sc.horizon()).cov));
    } else {
      const auto hyper = equivalence::map_alpha_to_eta(setup.alpha, cfg.eta0, sc.horizon());
      const natgrad::NatGradConfig gcfg = detail::natgrad_config(cfg, hyper);
      const SymMatrix j0 = cfg.eta0 * inverse_psd(setup.p0);
      const natgrad::GradTrace trace = natgrad::run(sc, gcfg, setup.s0, j0, cfg.seed);
      detail::append(names, detail::indexed("s_ngd", n));
      detail::append(names, detail::indexed("J_diag", n));
      names.push_back("eta");
      csv.header(names);
      for (std::size_t t = 0; t <= sc.horizon(); ++t) {
        std::vector<double> row = detail::head_values(sc, t);
        detail::append(row, trace.at(t).chart_value);
        detail::append(row, detail::diagonal_of(trace.at(t).metric));
        row.push_back(gcfg.eta(t));
        csv.row(row);
      }
      summary.add("final_state", trace.at(sc.horizon()).chart_value);
      summary.add("final_metric_diag", detail::diagonal_of(trace.at(sc.horizon()).metric));
    }
    summary.write(out / "summary.txt");
    return kExitOk;
  }

  if (mode == "bucy" || mode == "cngd") {
    const ContinuousModel model = detail::continuous_model(cfg, mode);
    const Index n = model.dim_state;
    const double horizon = cfg.continuous_horizon();
    const TimeFunction alpha = cfg.alpha.continuous(horizon);
    const Vector s0 = state_vector(cfg.s0, n, "s0", Vector::Zero(n));
    const SymMatrix p0 = SymMatrix::diagonal(expand_diagonal(cfg.p0, n, "P0"));
    bucy::IntegratorConfig icfg;
    icfg.dt = cfg.dt;
    icfg.horizon = horizon;
    if (cfg.dt > horizon) throw ConfigError("dt must not exceed T");
    const bucy::ContinuousTrace trace =
        mode == "bucy" ? bucy::integrate_bucy(model, {s0, p0, 0.0}, alpha, icfg)
                       : bucy::integrate_cngd(model, {s0, cfg.eta0 * inverse_psd(p0), cfg.eta0, 0.0},
                                              alpha, icfg);
    const auto out = detail::prepare_out(cfg);
    CsvWriter csv(out / "trace.csv");
    std::vector<std::string> names{"t"};
    detail::append(names, detail::indexed("y", model.dim_obs));
    detail::append(names, detail::indexed(mode == "bucy" ? "s_bucy" : "s_cngd", n));
    detail::append(names, detail::indexed(mode == "bucy" ? "P_diag" : "J_diag", n));
    if (mode == "cngd") names.push_back("eta");
    csv.header(names);
    for (const auto& sample : trace.samples) {
      std::vector<double> row{sample.t};
      detail::append(row, model.y(sample.t));
      detail::append(row, sample.s);
      detail::append(row, detail::diagonal_of(sample.matrix));
      if (sample.eta) row.push_back(*sample.eta);
      csv.row(row);
    }
    summary.add("T", horizon);
    summary.add("dt", cfg.dt);
    summary.add("steps", std::to_string(trace.samples.size() - 1));
    summary.add("final_state", trace.samples.back().s);
    if (trace.samples.back().eta) summary.add("final_eta", *trace.samples.back().eta);
    summary.write(out / "summary.txt");
    return kExitOk;
  }

  throw ConfigError("unknown run mode '" + mode + "' (expected ekf, natgrad, bucy or cngd)");
}

inline int compare_with(RunConfig cfg, const std::string& mode, const Overrides& overrides = {}) {
  detail::apply(cfg, overrides);
  Summary summary;
  detail::common_summary(summary, "compare", mode, cfg);

  if (mode == "discrete") {
    const detail::DiscreteSetup setup = detail::discrete_setup(cfg, mode);
    const Scenario& sc = setup.scenario;
    const Index n = sc.model.dim_state;
    const auto result = equivalence::check_discrete(sc, setup.s0, setup.p0, setup.alpha, cfg.tol,
                                                    cfg.eta0, cfg.mutate);
    const auto out = detail::prepare_out(cfg);
    write_scenario_csv(out / "scenario.csv", sc);
    CsvWriter csv(out / "trace.csv");
    std::vector<std::string> names = detail::head_columns(sc);
    detail::append(names, detail::indexed("s_ekf", n));
    detail::append(names, detail::indexed("s_ngd", n));
    names.insert(names.end(), {"state_dev", "metric_dev"});
    csv.header(names);
    for (std::size_t t = 0; t <= sc.horizon(); ++t) {
      std::vector<double> row = detail::head_values(sc, t);
      detail::append(row, result.kalman.at(t).mean);
      detail::append(row, result.gradient.at(t).chart_value);
      row.push_back(result.report.state_dev[t]);
      row.push_back(result.report.metric_dev[t]);
      csv.row(row);
    }
    summary.add("family", sc.family.describe());
    summary.add("T", std::to_string(sc.horizon()));
    summary.add("eta0", cfg.eta0);
    summary.add("fisher_mode", std::string("exact"));
    summary.add("mutate", std::string(equivalence::to_string(cfg.mutate)));
    summary.add("max_state_dev", result.report.max_state_dev);
    summary.add("max_metric_dev", result.report.max_metric_dev);
    summary.add("tol", cfg.tol);
    summary.add_flag("passed", result.report.passed);
    summary.write(out / "summary.txt");
    return result.report.passed ? kExitOk : kExitTolerance;
  }

  if (mode == "continuous") {
    const ContinuousModel model = detail::continuous_model(cfg, mode);
    const Index n = model.dim_state;
    const double horizon = cfg.continuous_horizon();
    std::vector<double> dts = cfg.dt_list.empty() ? std::vector<double>{cfg.dt} : cfg.dt_list;
    for (double dt : dts) {
      if (dt > horizon) throw ConfigError("dt_list entries must not exceed T");
    }
    const Vector s0 = state_vector(cfg.s0, n, "s0", Vector::Zero(n));
    const SymMatrix p0 = SymMatrix::diagonal(expand_diagonal(cfg.p0, n, "P0"));
    const double tol = cfg.tol;
    const auto result = equivalence::check_continuous(model, s0, p0, cfg.alpha.continuous(horizon), dts,
                                                      horizon, cfg.eta0, [tol](double) { return tol; });
    const auto out = detail::prepare_out(cfg);

    std::size_t finest = 0;
    for (std::size_t i = 1; i < dts.size(); ++i) {
      if (dts[i] < dts[finest]) finest = i;
    }
    {
      CsvWriter conv(out / "convergence.csv");
      conv.header({"dt", "max_state_dev", "max_metric_dev", "tol", "passed"});
      for (const auto& run : result.runs) {
        conv.row({run.dt, run.report.max_state_dev, run.report.max_metric_dev, run.report.tol,
                  run.report.passed ? 1.0 : 0.0});
      }
    }
    {
      const auto& run = result.runs[finest];
      CsvWriter csv(out / "trace.csv");
      std::vector<std::string> names{"t"};
      detail::append(names, detail::indexed("y", model.dim_obs));
      detail::append(names, detail::indexed("s_bucy", n));
      detail::append(names, detail::indexed("s_cngd", n));
      names.insert(names.end(), {"eta", "state_dev", "metric_dev"});
      csv.header(names);
      for (std::size_t i = 0; i < run.kalman.samples.size(); ++i) {
        const auto& k = run.kalman.samples[i];
        const auto& g = run.gradient.samples[i];
        std::vector<double> row{k.t};
        detail::append(row, model.y(k.t));
        detail::append(row, k.s);
        detail::append(row, g.s);
        row.insert(row.end(), {*g.eta, run.report.state_dev[i], run.report.metric_dev[i]});
        csv.row(row);
      }
    }

    // Pass: the finest step is within tolerance and, with several steps, the
    // deviation shrinks with dt at order at least one.
    const bool order_ok = dts.size() < 2 || result.state_order >= 1.0;
    const bool passed = result.runs[finest].report.passed && order_ok;
    summary.add("T", horizon);
    summary.add("eta0", cfg.eta0);
    for (std::size_t i = 0; i < result.runs.size(); ++i) {
      const auto& run = result.runs[i];
      const std::string idx = "[" + std::to_string(i) + "]";
      summary.add("dt" + idx, run.dt);
      summary.add("max_state_dev" + idx, run.report.max_state_dev);
      summary.add("max_metric_dev" + idx, run.report.max_metric_dev);
    }
    if (dts.size() >= 2) {
      summary.add("state_order", result.state_order);
      summary.add("combined_order", result.combined_order);
    }
    summary.add("max_state_dev", result.runs[finest].report.max_state_dev);
    summary.add("max_metric_dev", result.runs[finest].report.max_metric_dev);
    summary.add("tol", tol);
    summary.add_flag("passed", passed);
    summary.write(out / "summary.txt");
    return passed ? kExitOk : kExitTolerance;
  }

  throw ConfigError("unknown compare mode '" + mode + "' (expected discrete or continuous)");
}

inline int cmd_run(const std::string& config_path, const std::string& mode,
                   const Overrides& overrides = {}, std::ostream& err = std::cerr) {
  return guarded([&] { return run_with(load_config(config_path), mode, overrides); }, err);
}

inline int cmd_compare(const std::string& config_path, const std::string& mode,
                       const Overrides& overrides = {}, std::ostream& err = std::cerr) {
  return guarded([&] { return compare_with(load_config(config_path), mode, overrides); }, err);
}

inline int cmd_list(std::ostream& out = std::cout) {
  for (const auto& name : builtin_names()) out << name << '\n';
  return kExitOk;
}

}  // namespace natkf::cli
