// Dynamical-system definitions, the built-in test systems, and synthetic
// scenario generation (noiseless ground truth plus sampled observations).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "natkf/errors.hpp"
#include "natkf/expfam.hpp"
#include "natkf/numerics.hpp"
#include "natkf/random.hpp"

namespace natkf {

using StateMap = std::function<Vector(const Vector& s, const Vector& u)>;
using JacobianMap = std::function<Matrix(const Vector& s, const Vector& u)>;
/// u_t for t = 1, 2, ...; may return an empty vector.
using InputSequence = std::function<Vector(std::size_t t)>;

/**
 * Discrete-time system s_t = f(s_{t−1}, u_t), ŷ_t = h(s_t, u_t).
 *
 * When a Jacobian callable is absent, or `jacobian.mode` is finite_difference,
 * Jacobians are computed by central differences.
 */
struct DynamicalModel {
  std::string name;
  Index dim_state = 0;
  Index dim_input = 0;
  Index dim_mean = 0;
  StateMap transition;
  StateMap observation;
  JacobianMap transition_jacobian;
  JacobianMap observation_jacobian;
  JacobianSpec jacobian;
  InputSequence inputs;
  /// Family the system is usually observed through.
  ObservationFamily nominal_family = ObservationFamily::bernoulli();
  /// Ground-truth initial state used by generate_scenario.
  Vector nominal_initial_state;

  Vector input(std::size_t t) const { return inputs ? inputs(t) : Vector(Vector::Zero(dim_input)); }

  Vector f(const Vector& s, std::size_t t) const {
    Vector out = transition(s, input(t));
    if (!all_finite(out)) throw NonFinite(name + ": transition is non-finite at t=" + std::to_string(t));
    return out;
  }
  Vector h(const Vector& s, std::size_t t) const {
    Vector out = observation(s, input(t));
    if (!all_finite(out)) throw NonFinite(name + ": observation map is non-finite at t=" + std::to_string(t));
    return out;
  }
  /// F = ∂f/∂s at (s, u_t).
  Matrix jacobian_F(const Vector& s, std::size_t t) const {
    const Vector u = input(t);
    if (transition_jacobian && jacobian.mode == JacobianSpec::Mode::analytic) {
      return transition_jacobian(s, u);
    }
    return fd_jacobian([&](const Vector& x) { return transition(x, u); }, s, jacobian.step);
  }
  /// H = ∂h/∂s at (s, u_t).
  Matrix jacobian_H(const Vector& s, std::size_t t) const {
    const Vector u = input(t);
    if (observation_jacobian && jacobian.mode == JacobianSpec::Mode::analytic) {
      return observation_jacobian(s, u);
    }
    return fd_jacobian([&](const Vector& x) { return observation(x, u); }, s, jacobian.step);
  }
};

/// s_t = f(s_{t−1}, u_t).
inline Vector step_dynamics(const DynamicalModel& model, const Vector& s, std::size_t t) {
  return model.f(s, t);
}

/**
 * Continuous-time system ṡ = f(s, u_t) observed through y(t) = h(s, u_t) + white
 * noise of covariance R_t. The observation path y(t) is a smooth callable.
 */
struct ContinuousModel {
  std::string name;
  Index dim_state = 0;
  Index dim_obs = 0;
  StateMap vector_field;
  StateMap observation;
  JacobianMap field_jacobian;
  JacobianMap observation_jacobian;
  JacobianSpec jacobian;
  std::function<Vector(double)> inputs;
  std::function<SymMatrix(double)> noise_cov;
  std::function<Vector(double)> observation_path;
  Vector nominal_initial_state;

  Vector input(double t) const { return inputs ? inputs(t) : Vector(0); }
  Vector f(const Vector& s, double t) const { return vector_field(s, input(t)); }
  Vector h(const Vector& s, double t) const { return observation(s, input(t)); }
  Matrix F(const Vector& s, double t) const {
    const Vector u = input(t);
    if (field_jacobian && jacobian.mode == JacobianSpec::Mode::analytic) return field_jacobian(s, u);
    return fd_jacobian([&](const Vector& x) { return vector_field(x, u); }, s, jacobian.step);
  }
  Matrix H(const Vector& s, double t) const {
    const Vector u = input(t);
    if (observation_jacobian && jacobian.mode == JacobianSpec::Mode::analytic) {
      return observation_jacobian(s, u);
    }
    return fd_jacobian([&](const Vector& x) { return observation(x, u); }, s, jacobian.step);
  }
  SymMatrix R(double t) const { return noise_cov(t); }
  Vector y(double t) const { return observation_path(t); }
};

/// Ground truth and observations; observation(t) is y_t for t = 1..T.
struct Scenario {
  DynamicalModel model;
  ObservationFamily family;
  std::vector<Vector> true_states;  // s_0..s_T
  std::vector<Observation> observations;  // y_1..y_T
  std::uint64_t seed = 0;

  std::size_t horizon() const { return observations.size(); }
  const Observation& observation(std::size_t t) const { return observations.at(t - 1); }
};

/**
 * Noiseless trajectory from the model's nominal initial state, with
 * y_t ~ p_obs(·|h(s_t, u_t)). Deterministic in (model, family, T, seed).
 */
inline Scenario generate_scenario(const DynamicalModel& model, const ObservationFamily& family,
                                  std::size_t horizon, std::uint64_t seed) {
  if (horizon < 1) throw DomainError("generate_scenario: horizon must be at least 1");
  if (family.mean_dim() != model.dim_mean) {
    throw DomainError("generate_scenario: family " + family.describe() + " does not match model " +
                      model.name + " with mean dimension " + std::to_string(model.dim_mean));
  }
  Scenario sc{model, family, {}, {}, seed};
  sc.true_states.reserve(horizon + 1);
  sc.observations.reserve(horizon);
  sc.true_states.push_back(model.nominal_initial_state);
  CounterRng rng = CounterRng(seed).split(0x0b5e);
  for (std::size_t t = 1; t <= horizon; ++t) {
    sc.true_states.push_back(step_dynamics(model, sc.true_states.back(), t));
    sc.observations.push_back(sample(family, model.h(sc.true_states.back(), t), rng));
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Built-in systems
// ---------------------------------------------------------------------------

namespace detail {

inline Matrix rotation2d(double angle) {
  Matrix r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Regressors u_t = (1, z_1, ..., z_{d−1}) with z ~ N(0, 1), fixed per (key, t).
inline InputSequence regressors(Index dim, std::uint64_t key) {
  return [dim, key](std::size_t t) {
    CounterRng rng = CounterRng(key).split(t);
    Vector u(dim);
    u(0) = 1.0;
    for (Index i = 1; i < dim; ++i) u(i) = rng.normal();
    return u;
  };
}

inline constexpr std::uint64_t kRegressorKey = 0x5eed'1d5ULL;

}  // namespace detail

/// Coupling matrix of the tanhspring system; its spectral norm is below 2.
inline Matrix tanhspring_coupling() {
  Matrix a(2, 2);
  a << 0.2, 1.2, -1.2, 0.3;
  return a;
}
inline constexpr double kTanhspringStep = 0.1;

inline DynamicalModel make_static_model() {
  DynamicalModel m;
  m.name = "static";
  m.dim_state = 3;
  m.dim_input = 3;
  m.dim_mean = 1;
  m.transition = [](const Vector& s, const Vector&) { return s; };
  m.transition_jacobian = [](const Vector& s, const Vector&) {
    return Matrix(Matrix::Identity(s.size(), s.size()));
  };
  m.observation = [](const Vector& s, const Vector& u) { return Vector::Constant(1, u.dot(s)); };
  m.observation_jacobian = [](const Vector&, const Vector& u) { return Matrix(u.transpose()); };
  m.inputs = detail::regressors(3, detail::kRegressorKey);
  m.nominal_family = ObservationFamily::gaussian(0.5);
  m.nominal_initial_state = (Vector(3) << 0.5, -1.0, 2.0).finished();
  return m;
}

inline DynamicalModel make_linear2d_model() {
  static const Matrix kF = 0.99 * detail::rotation2d(0.3);
  DynamicalModel m;
  m.name = "linear2d";
  m.dim_state = 2;
  m.dim_input = 0;
  m.dim_mean = 1;
  m.transition = [](const Vector& s, const Vector&) { return Vector(kF * s); };
  m.transition_jacobian = [](const Vector&, const Vector&) { return kF; };
  m.observation = [](const Vector& s, const Vector&) { return Vector::Constant(1, s(0)); };
  m.observation_jacobian = [](const Vector&, const Vector&) {
    return Matrix((Matrix(1, 2) << 1.0, 0.0).finished());
  };
  m.nominal_family = ObservationFamily::gaussian(0.25);
  m.nominal_initial_state = (Vector(2) << 1.0, 0.0).finished();
  return m;
}

/// s′ = s + ε·tanh(A s) with ε = 0.1, ‖A‖₂ < 2, so ‖F − I‖₂ < 0.2.
inline DynamicalModel make_tanhspring_model() {
  static const Matrix kA = tanhspring_coupling();
  DynamicalModel m;
  m.name = "tanhspring";
  m.dim_state = 2;
  m.dim_input = 0;
  m.dim_mean = 2;
  m.transition = [](const Vector& s, const Vector&) {
    return Vector(s + kTanhspringStep * (kA * s).array().tanh().matrix());
  };
  m.transition_jacobian = [](const Vector& s, const Vector&) {
    const Eigen::ArrayXd th = (kA * s).array().tanh();
    const Vector sech2 = (1.0 - th.square()).matrix();
    return Matrix(Matrix::Identity(2, 2) + kTanhspringStep * sech2.asDiagonal() * kA);
  };
  m.observation = [](const Vector& s, const Vector&) {
    return Vector((Vector(2) << s(0), std::sin(s(1))).finished());
  };
  m.observation_jacobian = [](const Vector& s, const Vector&) {
    Matrix h = Matrix::Zero(2, 2);
    h(0, 0) = 1.0;
    h(1, 1) = std::cos(s(1));
    return h;
  };
  m.nominal_family = ObservationFamily::gaussian(SymMatrix::identity(2, 0.1));
  m.nominal_initial_state = (Vector(2) << 1.0, -1.0).finished();
  return m;
}

/// f = Id with a bernoulli observation of sigmoid(θᵀu).
inline DynamicalModel make_logistic_static_model() {
  DynamicalModel m;
  m.name = "logistic-static";
  m.dim_state = 2;
  m.dim_input = 2;
  m.dim_mean = 1;
  m.transition = [](const Vector& s, const Vector&) { return s; };
  m.transition_jacobian = [](const Vector& s, const Vector&) {
    return Matrix(Matrix::Identity(s.size(), s.size()));
  };
  m.observation = [](const Vector& s, const Vector& u) {
    return Vector::Constant(1, detail::sigmoid(u.dot(s)));
  };
  m.observation_jacobian = [](const Vector& s, const Vector& u) {
    const double p = detail::sigmoid(u.dot(s));
    return Matrix(p * (1.0 - p) * u.transpose());
  };
  m.inputs = detail::regressors(2, detail::kRegressorKey + 1);
  m.nominal_family = ObservationFamily::bernoulli();
  m.nominal_initial_state = (Vector(2) << 0.3, 1.5).finished();
  return m;
}

/// Smooth stand-in for a pendulum angle record: small-angle solution plus a slow wobble.
inline Vector pendulum_observation_path(double t) {
  return Vector::Constant(1, 0.8 * std::cos(t) + 0.05 * std::sin(3.0 * t));
}

/// ṡ = (s₂, −sin s₁), h = s₁.
inline ContinuousModel make_pendulum_ct_model(double obs_variance = 0.05) {
  ContinuousModel m;
  m.name = "pendulum-ct";
  m.dim_state = 2;
  m.dim_obs = 1;
  m.vector_field = [](const Vector& s, const Vector&) {
    return Vector((Vector(2) << s(1), -std::sin(s(0))).finished());
  };
  m.field_jacobian = [](const Vector& s, const Vector&) {
    return Matrix((Matrix(2, 2) << 0.0, 1.0, -std::cos(s(0)), 0.0).finished());
  };
  m.observation = [](const Vector& s, const Vector&) { return Vector::Constant(1, s(0)); };
  m.observation_jacobian = [](const Vector&, const Vector&) {
    return Matrix((Matrix(1, 2) << 1.0, 0.0).finished());
  };
  m.noise_cov = [obs_variance](double) { return SymMatrix::identity(1, obs_variance); };
  m.observation_path = pendulum_observation_path;
  m.nominal_initial_state = (Vector(2) << 0.8, 0.0).finished();
  return m;
}

/**
 * Scalar ṡ = rate·s, h = s, noise variance R. The default observation path is a
 * decaying exponential with a smooth sinusoidal perturbation.
 */
inline ContinuousModel make_linear_ct_model(
    double rate = -0.5, double obs_variance = 0.02,
    std::function<Vector(double)> path = {}) {
  ContinuousModel m;
  m.name = "linear-ct";
  m.dim_state = 1;
  m.dim_obs = 1;
  m.vector_field = [rate](const Vector& s, const Vector&) { return Vector(rate * s); };
  m.field_jacobian = [rate](const Vector&, const Vector&) { return Matrix::Constant(1, 1, rate); };
  m.observation = [](const Vector& s, const Vector&) { return s; };
  m.observation_jacobian = [](const Vector&, const Vector&) { return Matrix::Identity(1, 1); };
  m.noise_cov = [obs_variance](double) { return SymMatrix::identity(1, obs_variance); };
  if (!path) {
    path = [rate](double t) {
      return Vector::Constant(1, std::exp(rate * t) + 0.1 * std::sin(2.0 * t));
    };
  }
  m.observation_path = std::move(path);
  m.nominal_initial_state = Vector::Constant(1, 1.0);
  return m;
}

using AnyModel = std::variant<DynamicalModel, ContinuousModel>;

/// Names of the built-in systems, sorted.
inline std::vector<std::string> builtin_names() {
  std::vector<std::string> names{"static",  "linear2d",    "tanhspring",
                                 "logistic-static", "pendulum-ct", "linear-ct"};
  std::sort(names.begin(), names.end());
  return names;
}

inline AnyModel builtin(const std::string& name) {
  if (name == "static") return make_static_model();
  if (name == "linear2d") return make_linear2d_model();
  if (name == "tanhspring") return make_tanhspring_model();
  if (name == "logistic-static") return make_logistic_static_model();
  if (name == "pendulum-ct") return make_pendulum_ct_model();
  if (name == "linear-ct") return make_linear_ct_model();
  throw UnknownModel("unknown model '" + name + "'");
}

inline DynamicalModel builtin_discrete(const std::string& name) {
  AnyModel m = builtin(name);
  if (auto* d = std::get_if<DynamicalModel>(&m)) return *d;
  throw UnknownModel("'" + name + "' is a continuous-time model");
}

inline ContinuousModel builtin_continuous(const std::string& name) {
  AnyModel m = builtin(name);
  if (auto* c = std::get_if<ContinuousModel>(&m)) return *c;
  throw UnknownModel("'" + name + "' is a discrete-time model");
}

}  // namespace natkf
