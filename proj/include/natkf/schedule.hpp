#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "natkf/errors.hpp"

namespace natkf {

/// Hyperparameter indexed by discrete time t = 1, 2, ... (or t = 0 for η₀).
using Schedule = std::function<double(std::size_t t)>;
/// Hyperparameter as a function of continuous time.
using TimeFunction = std::function<double(double t)>;

inline Schedule constant_schedule(double value) {
  return [value](std::size_t) { return value; };
}

/// Linear ramp from `first` at t = 1 to `last` at t = horizon; flat outside.
inline Schedule ramp_schedule(double first, double last, std::size_t horizon) {
  return [=](std::size_t t) {
    if (horizon <= 1 || t <= 1) return first;
    if (t >= horizon) return last;
    return first + (last - first) * static_cast<double>(t - 1) / static_cast<double>(horizon - 1);
  };
}

/**
 * Schedule read from a table indexed by t (entry 0 is t = 0). Times past the
 * end repeat the last entry.
 */
inline Schedule table_schedule(std::vector<double> values) {
  if (values.empty()) throw DomainError("table_schedule: empty table");
  return [v = std::move(values)](std::size_t t) { return t < v.size() ? v[t] : v.back(); };
}

}  // namespace natkf
