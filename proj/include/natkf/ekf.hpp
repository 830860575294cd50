// Extended Kalman filter with exponential-family observations.
//
// Transition:   s⁻ = f(s, u_t), P⁻ = F P Fᵀ + Q_t   (or (1 + α_t) F P Fᵀ with fading memory)
// Observation:  E = T(y) − ŷ, R = Cov(T | ŷ), K = P⁻Hᵀ(HP⁻Hᵀ + R)⁻¹,
//               P = (I − KH)P⁻, s = s⁻ + K E
//
// The observation step is also available in information form (P⁻¹ += HᵀR⁻¹H)
// and gradient form (s = s⁻ + P (∂ ln p/∂s)ᵀ); all three agree algebraically.
#pragma once

#include <string>
#include <vector>

#include "natkf/errors.hpp"
#include "natkf/expfam.hpp"
#include "natkf/model.hpp"
#include "natkf/numerics.hpp"
#include "natkf/schedule.hpp"

namespace natkf::ekf {

/// Gaussian approximation N(mean, cov) of the state posterior.
struct GaussianBelief {
  Vector mean;
  SymMatrix cov;
};

enum class NoiseMode {
  general,  ///< explicit Q_t
  fading,   ///< Q_t = α_t F P Fᵀ
};

enum class UpdateForm { gain, information, gradient };

struct EkfConfig {
  NoiseMode noise = NoiseMode::fading;
  UpdateForm form = UpdateForm::gain;
  Schedule alpha = constant_schedule(0.0);
  std::function<SymMatrix(std::size_t t)> process_noise;
};

struct Prediction {
  GaussianBelief belief;
  Vector predicted_mean_obs;  // ŷ_t = h(s⁻, u_t)
  Matrix transition_jacobian;  // F_{t−1}
};

inline Prediction transition(const GaussianBelief& belief, const DynamicalModel& model,
                             std::size_t t, const EkfConfig& config) {
  Prediction out;
  out.transition_jacobian = model.jacobian_F(belief.mean, t);
  const Matrix& f = out.transition_jacobian;
  out.belief.mean = model.f(belief.mean, t);
  const Matrix propagated = f * belief.cov.matrix() * f.transpose();
  if (config.noise == NoiseMode::fading) {
    const double alpha = config.alpha(t);
    if (!(alpha >= 0.0)) throw DomainError("fading-memory weight must be non-negative");
    out.belief.cov = SymMatrix((1.0 + alpha) * propagated);
  } else {
    if (!config.process_noise) throw DomainError("general noise mode needs a Q_t schedule");
    out.belief.cov = SymMatrix(propagated) + config.process_noise(t);
  }
  if (!all_finite(out.belief.cov.matrix())) throw NonFinite("transition: covariance is non-finite");
  out.predicted_mean_obs = model.h(out.belief.mean, t);
  return out;
}

inline GaussianBelief observe_gain(const GaussianBelief& predicted, const Observation& y,
                                   const Vector& yhat, const DynamicalModel& model,
                                   const ObservationFamily& family, std::size_t t) {
  const Vector innovation = sufficient_stats(family, y) - yhat;
  const SymMatrix r = cov_suffstats(family, yhat);
  const Matrix h = model.jacobian_H(predicted.mean, t);
  const Matrix& p = predicted.cov.matrix();
  const Matrix ph = p * h.transpose();
  const SymMatrix s(h * ph + r.matrix());
  // K = P Hᵀ S⁻¹, formed as (S⁻¹ H P)ᵀ.
  const Matrix gain = solve_psd(s, Matrix(ph.transpose())).transpose();
  GaussianBelief out;
  out.cov = SymMatrix(p - gain * h * p);
  out.mean = predicted.mean + gain * innovation;
  return out;
}

inline GaussianBelief observe_information(const GaussianBelief& predicted, const Observation& y,
                                          const Vector& yhat, const DynamicalModel& model,
                                          const ObservationFamily& family, std::size_t t) {
  const Vector innovation = sufficient_stats(family, y) - yhat;
  const SymMatrix r = cov_suffstats(family, yhat);
  const Matrix h = model.jacobian_H(predicted.mean, t);
  const SymMatrix prior_info = inverse_psd(predicted.cov);
  const SymMatrix obs_info(h.transpose() * solve_psd(r, h));
  const SymMatrix post_info = prior_info + obs_info;
  // Information vector: P⁻¹s = P⁻⁻¹s⁻ + HᵀR⁻¹(E + H s⁻).
  const Vector info_vec = prior_info.matrix() * predicted.mean +
                          h.transpose() * solve_psd(r, Vector(innovation + h * predicted.mean));
  GaussianBelief out;
  out.cov = inverse_psd(post_info);
  out.mean = solve_psd(post_info, info_vec);
  return out;
}

inline GaussianBelief observe_gradient(const GaussianBelief& predicted, const Observation& y,
                                       const Vector& yhat, const DynamicalModel& model,
                                       const ObservationFamily& family, std::size_t t) {
  const Matrix h = model.jacobian_H(predicted.mean, t);
  const SymMatrix obs_fisher(h.transpose() * fisher_wrt_mean(family, yhat).matrix() * h);
  const SymMatrix post_info = inverse_psd(predicted.cov) + obs_fisher;
  const RowVector score = grad_logp_wrt_mean(family, y, yhat) * h;  // ∂ ln p / ∂s
  GaussianBelief out;
  out.cov = inverse_psd(post_info);
  out.mean = predicted.mean + out.cov.matrix() * score.transpose();
  return out;
}

inline GaussianBelief observe(const GaussianBelief& predicted, const Observation& y,
                              const Vector& yhat, const DynamicalModel& model,
                              const ObservationFamily& family, std::size_t t, UpdateForm form) {
  switch (form) {
    case UpdateForm::gain: return observe_gain(predicted, y, yhat, model, family, t);
    case UpdateForm::information: return observe_information(predicted, y, yhat, model, family, t);
    case UpdateForm::gradient: return observe_gradient(predicted, y, yhat, model, family, t);
  }
  return predicted;
}

struct FilterStep {
  std::size_t t = 0;
  GaussianBelief predicted;
  Vector yhat;
  GaussianBelief posterior;
};

struct FilterTrace {
  GaussianBelief prior;
  std::vector<FilterStep> steps;

  /// Posterior at time t (the prior for t = 0).
  const GaussianBelief& at(std::size_t t) const { return t == 0 ? prior : steps.at(t - 1).posterior; }
};

inline FilterTrace run(const Scenario& scenario, const EkfConfig& config, const Vector& s0,
                       const SymMatrix& p0) {
  if (s0.size() != scenario.model.dim_state || p0.dim() != scenario.model.dim_state) {
    throw DomainError("ekf::run: initial state/covariance do not match the model dimension");
  }
  if (!(min_eigenvalue(p0) > 0.0)) throw DomainError("ekf::run: P0 must be positive definite");
  FilterTrace trace;
  trace.prior = {s0, p0};
  trace.steps.reserve(scenario.horizon());
  GaussianBelief current = trace.prior;
  for (std::size_t t = 1; t <= scenario.horizon(); ++t) {
    const Prediction pred = transition(current, scenario.model, t, config);
    current = observe(pred.belief, scenario.observation(t), pred.predicted_mean_obs,
                      scenario.model, scenario.family, t, config.form);
    trace.steps.push_back({t, pred.belief, pred.predicted_mean_obs, current});
  }
  return trace;
}

}  // namespace natkf::ekf
