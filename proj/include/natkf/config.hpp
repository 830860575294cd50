// Flat `key = value` run configuration.
//
//   # comment
//   scenario = linear2d
//   T = 50
//   alpha = ramp(0, 0.5)
//   alpha[7] = 0.3
//
// Lists are comma separated. Unknown keys are rejected.
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "natkf/equivalence.hpp"
#include "natkf/errors.hpp"
#include "natkf/expfam.hpp"
#include "natkf/model.hpp"
#include "natkf/natgrad.hpp"
#include "natkf/numerics.hpp"
#include "natkf/schedule.hpp"

namespace natkf::cli {

/// How the fading-memory weight α_t is given.
struct AlphaSpec {
  enum class Kind { constant, list, ramp };
  Kind kind = Kind::constant;
  double value = 0.0;            // constant
  std::vector<double> values;    // list, entry i is α_{i+1}
  double first = 0.0, last = 0.0;  // ramp
  std::map<std::size_t, double> overrides;  // alpha[t] = v

  /// Discrete schedule over t = 1..horizon.
  Schedule discrete(std::size_t horizon) const {
    std::vector<double> table(horizon + 1, 0.0);
    const Schedule ramp = ramp_schedule(first, last, horizon);
    for (std::size_t t = 1; t <= horizon; ++t) {
      switch (kind) {
        case Kind::constant: table[t] = value; break;
        case Kind::list: table[t] = values.empty() ? 0.0 : values[std::min(t - 1, values.size() - 1)]; break;
        case Kind::ramp: table[t] = ramp(t); break;
      }
    }
    for (const auto& [t, v] : overrides) {
      if (t >= 1 && t <= horizon) table[t] = v;
    }
    return table_schedule(std::move(table));
  }

  /// Continuous α(t) on [0, horizon]; lists and per-step overrides are discrete-only.
  TimeFunction continuous(double horizon) const {
    if (kind == Kind::list || !overrides.empty()) {
      throw ConfigError("alpha: lists and alpha[t] overrides are not supported for continuous-time runs");
    }
    if (kind == Kind::constant) return [v = value](double) { return v; };
    return [a = first, b = last, horizon](double t) {
      return a + (b - a) * std::clamp(t / horizon, 0.0, 1.0);
    };
  }
};

struct RunConfig {
  std::string scenario;
  std::optional<std::string> family;  // defaults to the model's nominal family
  std::vector<double> noise;          // R: scalar or diagonal
  int classes = 3;
  std::optional<double> horizon;  // T; defaults to 50 steps or 1 time unit
  double dt = 1e-3;
  std::vector<double> dt_list;
  std::uint64_t seed = 0;
  std::vector<double> s0;        // empty: zeros
  std::vector<double> truth_s0;  // empty: model default
  std::vector<double> p0{1.0};   // scalar or diagonal
  AlphaSpec alpha;
  double eta0 = 0.5;
  std::optional<double> eta;    // overrides the mapped learning rate in natgrad runs
  std::optional<double> gamma;  // overrides the mapped metric decay in natgrad runs
  natgrad::FisherMode fisher = natgrad::FisherMode::exact;
  std::size_t mc_samples = 1;
  std::string out = "natkf-out";
  double tol = 1e-8;
  equivalence::Mutation mutate = equivalence::Mutation::none;
  std::optional<std::string> scenario_file;  // observations read from CSV instead of sampled

  std::size_t discrete_horizon() const {
    if (!horizon) return 50;
    if (!(*horizon >= 0.0) || *horizon != std::floor(*horizon)) {
      throw ConfigError("T must be a non-negative integer for discrete-time runs");
    }
    return static_cast<std::size_t>(*horizon);
  }
  double continuous_horizon() const {
    if (!horizon) return 1.0;
    if (!(*horizon > 0.0)) throw ConfigError("T must be positive for continuous-time runs");
    return *horizon;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double parse_double(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + v + "' is not a number");
  }
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  if (v.empty() || !std::all_of(v.begin(), v.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + v + "' is out of range");
  }
}

inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

inline AlphaSpec parse_alpha(const std::string& text) {
  const std::string v = trim(text);
  AlphaSpec spec;
  if (v.rfind("ramp(", 0) == 0) {
    if (v.back() != ')') throw ConfigError("alpha: malformed ramp '" + v + "'");
    const auto args = parse_list("alpha", v.substr(5, v.size() - 6));
    if (args.size() != 2) throw ConfigError("alpha: ramp takes two values");
    spec.kind = AlphaSpec::Kind::ramp;
    spec.first = args[0];
    spec.last = args[1];
  } else {
    const auto values = parse_list("alpha", v);
    if (values.size() == 1) {
      spec.value = values[0];
    } else {
      spec.kind = AlphaSpec::Kind::list;
      spec.values = values;
    }
  }
  return spec;
}

inline void parse_fisher(RunConfig& cfg, const std::string& text) {
  const std::string v = trim(text);
  if (v == "exact") {
    cfg.fisher = natgrad::FisherMode::exact;
  } else if (v == "outer-product") {
    cfg.fisher = natgrad::FisherMode::outer_product;
  } else if (v.rfind("monte-carlo(", 0) == 0 && v.back() == ')') {
    cfg.fisher = natgrad::FisherMode::monte_carlo;
    cfg.mc_samples = parse_unsigned("fisher_mode", v.substr(12, v.size() - 13));
    if (cfg.mc_samples == 0) throw ConfigError("fisher_mode: monte-carlo needs at least one sample");
  } else {
    throw ConfigError("fisher_mode: expected exact, outer-product or monte-carlo(n), got '" + v + "'");
  }
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::vector<std::pair<std::size_t, double>> overrides;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (value.empty()) throw ConfigError(key + ": missing value");

    if (key.rfind("alpha[", 0) == 0 && key.back() == ']') {
      const auto t = detail::parse_unsigned(key, key.substr(6, key.size() - 7));
      overrides.emplace_back(t, detail::parse_double(key, value));
    } else if (key == "scenario") {
      cfg.scenario = value;
    } else if (key == "family") {
      cfg.family = value;
    } else if (key == "R") {
      cfg.noise = detail::parse_list(key, value);
    } else if (key == "K") {
      cfg.classes = static_cast<int>(detail::parse_unsigned(key, value));
    } else if (key == "T") {
      cfg.horizon = detail::parse_double(key, value);
    } else if (key == "dt") {
      cfg.dt = detail::parse_double(key, value);
    } else if (key == "dt_list") {
      cfg.dt_list = detail::parse_list(key, value);
    } else if (key == "seed") {
      cfg.seed = detail::parse_unsigned(key, value);
    } else if (key == "s0") {
      cfg.s0 = detail::parse_list(key, value);
    } else if (key == "truth_s0") {
      cfg.truth_s0 = detail::parse_list(key, value);
    } else if (key == "P0") {
      cfg.p0 = detail::parse_list(key, value);
    } else if (key == "alpha") {
      cfg.alpha = detail::parse_alpha(value);
    } else if (key == "eta0") {
      cfg.eta0 = detail::parse_double(key, value);
    } else if (key == "eta") {
      cfg.eta = detail::parse_double(key, value);
    } else if (key == "gamma") {
      cfg.gamma = detail::parse_double(key, value);
    } else if (key == "fisher_mode") {
      detail::parse_fisher(cfg, value);
    } else if (key == "out") {
      cfg.out = value;
    } else if (key == "tol") {
      cfg.tol = detail::parse_double(key, value);
    } else if (key == "mutate") {
      cfg.mutate = equivalence::parse_mutation(value);
    } else if (key == "scenario_file") {
      cfg.scenario_file = value;
    } else {
      throw ConfigError("unknown key '" + key + "' on line " + std::to_string(lineno));
    }
  }
  for (const auto& [t, v] : overrides) cfg.alpha.overrides[t] = v;

  if (cfg.scenario.empty()) throw ConfigError("missing required field 'scenario'");
  if (!(cfg.eta0 > 0.0 && cfg.eta0 <= 1.0)) throw ConfigError("eta0 must lie in (0, 1]");
  if (!(cfg.tol > 0.0)) throw ConfigError("tol must be positive");
  if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
  for (double dt : cfg.dt_list) {
    if (!(dt > 0.0)) throw ConfigError("dt_list entries must be positive");
  }
  for (double p : cfg.p0) {
    if (!(p > 0.0)) throw ConfigError("P0 entries must be positive");
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  return parse_config(in);
}

/// Scalar or per-coordinate diagonal of length n.
inline Vector expand_diagonal(const std::vector<double>& values, Index n, const std::string& key) {
  if (values.size() == 1) return Vector::Constant(n, values[0]);
  if (static_cast<Index>(values.size()) != n) {
    throw ConfigError(key + ": expected 1 or " + std::to_string(n) + " values, got " +
                      std::to_string(values.size()));
  }
  return Eigen::Map<const Vector>(values.data(), n);
}

inline Vector state_vector(const std::vector<double>& values, Index n, const std::string& key,
                           const Vector& fallback) {
  if (values.empty()) return fallback;
  if (static_cast<Index>(values.size()) != n) {
    throw ConfigError(key + ": expected " + std::to_string(n) + " values, got " +
                      std::to_string(values.size()));
  }
  return Eigen::Map<const Vector>(values.data(), n);
}

/// Observation family named by the config, or the model's nominal one.
inline ObservationFamily resolve_family(const RunConfig& cfg, const DynamicalModel& model) {
  if (!cfg.family) {
    if (cfg.noise.empty() || model.nominal_family.kind() != FamilyKind::gaussian) {
      return model.nominal_family;
    }
    return ObservationFamily::gaussian(
        SymMatrix::diagonal(expand_diagonal(cfg.noise, model.dim_mean, "R")));
  }
  const std::string& name = *cfg.family;
  try {
    if (name == "gaussian") {
      if (cfg.noise.empty()) throw ConfigError("family gaussian needs R");
      return ObservationFamily::gaussian(
          SymMatrix::diagonal(expand_diagonal(cfg.noise, model.dim_mean, "R")));
    }
    if (name == "bernoulli") return ObservationFamily::bernoulli();
    if (name == "categorical") return ObservationFamily::categorical(cfg.classes);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("family: ") + e.what());
  }
  throw ConfigError("family: unknown family '" + name + "'");
}

}  // namespace natkf::cli
