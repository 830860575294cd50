// Online natural gradient on the trajectories of a dynamical system.
//
// Trajectories are parameterized at step t by their current state (the chart
// "state at time t"). Moving from chart t−1 to chart t maps the state through
// f and re-expresses the Fisher metric as (F⁻¹)ᵀ J F⁻¹; the gradient step is
// then an ordinary online natural gradient step in the new chart:
//
//   J_t = (1 − γ_t) J + γ_t E_y[(∂ ln p(y|ŷ_t)/∂s)⊗²]
//   s_t = s⁻ + η_t J_t⁻¹ (∂ ln p(y_t|ŷ_t)/∂s)ᵀ
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "natkf/errors.hpp"
#include "natkf/expfam.hpp"
#include "natkf/model.hpp"
#include "natkf/numerics.hpp"
#include "natkf/random.hpp"
#include "natkf/schedule.hpp"

namespace natkf::natgrad {

/// Point of the trajectory manifold in the current chart, with its metric.
struct NatGradState {
  Vector chart_value;
  SymMatrix metric;
};

enum class FisherMode {
  exact,          ///< Hᵀ Cov(T)⁻¹ H
  outer_product,  ///< score of the actual observation, squared
  monte_carlo,    ///< average squared score over synthetic draws
};

struct NatGradConfig {
  Schedule eta = constant_schedule(0.1);
  Schedule gamma = constant_schedule(0.1);
  FisherMode fisher = FisherMode::exact;
  std::size_t mc_samples = 1;
  /// Re-express the metric in the new chart at each step. Disabling this is
  /// only meaningful as a negative control.
  bool transport_metric = true;
};

/// Largest condition number accepted for a chart change.
inline constexpr double kMaxChartCondition = 1e12;

/// Metric in the new chart after a change of coordinates with Jacobian Ψ: (Ψ⁻¹)ᵀ J Ψ⁻¹.
inline SymMatrix pushforward_metric(const SymMatrix& metric, const Matrix& psi) {
  if (psi.rows() != psi.cols() || psi.rows() != metric.dim()) {
    throw DomainError("pushforward_metric: dimension mismatch");
  }
  if (psi.rows() == 0) return metric;
  Eigen::PartialPivLU<Matrix> lu(psi);
  const double rcond = lu.rcond();
  if (!(rcond * kMaxChartCondition >= 1.0) || !all_finite(psi)) {
    throw SingularMatrix("chart change is numerically singular (condition estimate " +
                         std::to_string(rcond > 0.0 ? 1.0 / rcond : INFINITY) + ")");
  }
  // Y = Ψ⁻ᵀ J, then X = Y Ψ⁻¹ via Ψᵀ Xᵀ = Yᵀ.
  const Matrix y = lu.transpose().solve(metric.matrix());
  const Matrix x_t = lu.transpose().solve(Matrix(y.transpose()));
  return SymMatrix(x_t.transpose());
}

struct Transported {
  NatGradState state;
  Matrix transition_jacobian;
};

/// Moves (s_{t−1}, J_{t−1}) into chart t: s⁻ = f(s_{t−1}, u_t), J = (F⁻¹)ᵀ J_{t−1} F⁻¹.
inline Transported chart_transport(const NatGradState& state, const DynamicalModel& model,
                                   std::size_t t, bool transport_metric = true) {
  Transported out;
  out.transition_jacobian = model.jacobian_F(state.chart_value, t);
  out.state.chart_value = model.f(state.chart_value, t);
  out.state.metric = transport_metric ? pushforward_metric(state.metric, out.transition_jacobian)
                                      : state.metric;
  return out;
}

/// ∂ ln p(y|ŷ)/∂s = (∂ ln p/∂ŷ) H.
inline RowVector state_score(const ObservationFamily& family, const Observation& y,
                             const Vector& yhat, const Matrix& h) {
  return grad_logp_wrt_mean(family, y, yhat) * h;
}

/**
 * Fisher information of one observation with respect to the state.
 * `y` is only read in outer-product mode and `rng` only in Monte Carlo mode.
 */
inline SymMatrix fisher_term(const Vector& yhat, const Matrix& h, const ObservationFamily& family,
                             FisherMode mode, std::size_t mc_samples, const Observation& y,
                             CounterRng& rng) {
  switch (mode) {
    case FisherMode::exact:
      return SymMatrix(h.transpose() * fisher_wrt_mean(family, yhat).matrix() * h);
    case FisherMode::outer_product: {
      const RowVector g = state_score(family, y, yhat, h);
      return SymMatrix(g.transpose() * g);
    }
    case FisherMode::monte_carlo: {
      if (mc_samples == 0) throw DomainError("monte-carlo Fisher needs at least one sample");
      Matrix acc = Matrix::Zero(h.cols(), h.cols());
      for (std::size_t i = 0; i < mc_samples; ++i) {
        const RowVector g = state_score(family, sample(family, yhat, rng), yhat, h);
        acc += g.transpose() * g;
      }
      return SymMatrix(acc / static_cast<double>(mc_samples));
    }
  }
  return {};
}

/// Observation step in the current chart; `state` must already be transported.
inline NatGradState update(const NatGradState& state, const Observation& y, const Vector& yhat,
                           const DynamicalModel& model, const ObservationFamily& family,
                           const NatGradConfig& config, std::size_t t, CounterRng& rng) {
  const double eta = config.eta(t);
  const double gamma = config.gamma(t);
  const Matrix h = model.jacobian_H(state.chart_value, t);
  const SymMatrix fisher = fisher_term(yhat, h, family, config.fisher, config.mc_samples, y, rng);
  NatGradState out;
  out.metric = (1.0 - gamma) * state.metric + gamma * fisher;
  const RowVector score = state_score(family, y, yhat, h);
  out.chart_value = state.chart_value + eta * solve_psd(out.metric, Vector(score.transpose()));
  return out;
}

struct GradStep {
  std::size_t t = 0;
  NatGradState predicted;  // transported, before the observation
  Vector yhat;
  NatGradState posterior;
};

struct GradTrace {
  NatGradState prior;
  std::vector<GradStep> steps;

  const NatGradState& at(std::size_t t) const { return t == 0 ? prior : steps.at(t - 1).posterior; }
};

inline GradTrace run(const Scenario& scenario, const NatGradConfig& config, const Vector& s0,
                     const SymMatrix& j0, std::uint64_t seed = 0) {
  if (s0.size() != scenario.model.dim_state || j0.dim() != scenario.model.dim_state) {
    throw DomainError("natgrad::run: initial state/metric do not match the model dimension");
  }
  if (!(min_eigenvalue(j0) > 0.0)) throw DomainError("natgrad::run: J0 must be positive definite");
  CounterRng rng = CounterRng(seed).split(0xf15e);
  GradTrace trace;
  trace.prior = {s0, j0};
  trace.steps.reserve(scenario.horizon());
  NatGradState current = trace.prior;
  for (std::size_t t = 1; t <= scenario.horizon(); ++t) {
    const Transported moved = chart_transport(current, scenario.model, t, config.transport_metric);
    const Vector yhat = scenario.model.h(moved.state.chart_value, t);
    current = update(moved.state, scenario.observation(t), yhat, scenario.model, scenario.family,
                     config, t, rng);
    trace.steps.push_back({t, moved.state, yhat, current});
  }
  return trace;
}

/// Prediction ŷ = h(θ, u) of a parametric model and its Jacobian in θ.
struct Predictor {
  StateMap mean;
  JacobianMap jacobian;
};

/**
 * Ordinary online natural gradient on a fixed parameter θ (no charts):
 *   J_t = (1 − γ_t) J_{t−1} + γ_t E_y[(∂ ln p(y|u_t, θ)/∂θ)⊗²]
 *   θ_t = θ_{t−1} + η_t J_t⁻¹ (∂ ln p(y_t|u_t, θ)/∂θ)ᵀ
 */
inline GradTrace plain_online_natgrad(const InputSequence& inputs,
                                      const std::vector<Observation>& observations,
                                      const Predictor& predictor, const ObservationFamily& family,
                                      const NatGradConfig& config, const Vector& theta0,
                                      const SymMatrix& j0, std::uint64_t seed = 0) {
  CounterRng rng = CounterRng(seed).split(0xf15e);
  GradTrace trace;
  trace.prior = {theta0, j0};
  Vector theta = theta0;
  SymMatrix metric = j0;
  for (std::size_t t = 1; t <= observations.size(); ++t) {
    const Vector u = inputs ? inputs(t) : Vector();
    const Vector yhat = predictor.mean(theta, u);
    const Matrix h = predictor.jacobian(theta, u);
    const NatGradState before{theta, metric};
    metric = (1.0 - config.gamma(t)) * metric +
             config.gamma(t) *
                 fisher_term(yhat, h, family, config.fisher, config.mc_samples, observations[t - 1], rng);
    const RowVector score = grad_logp_wrt_mean(family, observations[t - 1], yhat) * h;
    theta = theta + config.eta(t) * solve_psd(metric, Vector(score.transpose()));
    trace.steps.push_back({t, before, yhat, {theta, metric}});
  }
  return trace;
}

}  // namespace natkf::natgrad
