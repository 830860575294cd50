// Hyperparameter correspondence between the fading-memory Kalman filter and the
// trajectory-space natural gradient, and side-by-side runs that measure how far
// apart the two algorithms end up.
//
// Discrete time:   γ_t = η_t,  1/η_t = 1/((1 + α_t) η_{t−1}) + 1,  P₀ = η₀ J₀⁻¹
// Continuous time: γ_t = η_t,  η̇ = αη − η²
// Under these relations the two state estimates coincide and P_t = η_t J_t⁻¹.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "natkf/bucy.hpp"
#include "natkf/ekf.hpp"
#include "natkf/errors.hpp"
#include "natkf/model.hpp"
#include "natkf/natgrad.hpp"
#include "natkf/numerics.hpp"
#include "natkf/schedule.hpp"

namespace natkf::equivalence {

/// Gradient-side schedules matched to a fading-memory schedule; index 0 holds η₀.
struct HyperMap {
  std::vector<double> alpha;  // alpha[0] is unused (0)
  std::vector<double> eta;
  std::vector<double> gamma;

  Schedule eta_schedule() const { return table_schedule(eta); }
  Schedule gamma_schedule() const { return table_schedule(gamma); }
  Schedule alpha_schedule() const { return table_schedule(alpha); }
};

inline HyperMap map_alpha_to_eta(const Schedule& alpha, double eta0, std::size_t horizon) {
  if (!(eta0 > 0.0 && eta0 <= 1.0)) throw DomainError("eta0 must lie in (0, 1]");
  HyperMap map;
  map.alpha.assign(horizon + 1, 0.0);
  map.eta.assign(horizon + 1, eta0);
  // Iterate on 1/η so that α ≡ 0, η₀ = 1 yields 1/(t + 1) without rounding drift.
  double inv = 1.0 / eta0;
  for (std::size_t t = 1; t <= horizon; ++t) {
    const double a = alpha(t);
    if (!(a >= 0.0)) throw DomainError("fading-memory weight must be non-negative");
    map.alpha[t] = a;
    inv = inv / (1.0 + a) + 1.0;
    map.eta[t] = 1.0 / inv;
  }
  map.gamma = map.eta;
  return map;
}

/// Inverse map α_t = η_t / ((1 − η_t) η_{t−1}) − 1 for t ≥ 1; entry 0 is 0.
inline std::vector<double> map_eta_to_alpha(const std::vector<double>& eta) {
  if (eta.empty()) throw DomainError("map_eta_to_alpha: empty schedule");
  std::vector<double> alpha(eta.size(), 0.0);
  for (std::size_t t = 1; t < eta.size(); ++t) {
    if (!(eta[t] > 0.0 && eta[t] < 1.0)) {
      throw DomainError("map_eta_to_alpha: eta_" + std::to_string(t) + " = " +
                        std::to_string(eta[t]) + " is not in (0, 1)");
    }
    alpha[t] = eta[t] / ((1.0 - eta[t]) * eta[t - 1]) - 1.0;
  }
  return alpha;
}

struct ComparisonReport {
  double max_state_dev = 0.0;
  double max_metric_dev = 0.0;
  std::vector<double> state_dev;   // per step, t = 0..T (or per grid point)
  std::vector<double> metric_dev;
  double tol = 0.0;
  bool passed = false;
};

/// Negative controls that break one ingredient of the correspondence.
enum class Mutation {
  none,
  drop_fading_factor,     ///< Kalman side propagates F P Fᵀ without (1 + α_t)
  half_gamma,             ///< gradient side uses γ_t = η_t / 2
  skip_metric_transport,  ///< gradient side keeps J in the old chart
};

inline const char* to_string(Mutation m) {
  switch (m) {
    case Mutation::none: return "none";
    case Mutation::drop_fading_factor: return "drop_fading_factor";
    case Mutation::half_gamma: return "half_gamma";
    case Mutation::skip_metric_transport: return "skip_metric_transport";
  }
  return "?";
}

inline Mutation parse_mutation(const std::string& name) {
  for (Mutation m : {Mutation::none, Mutation::drop_fading_factor, Mutation::half_gamma,
                     Mutation::skip_metric_transport}) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("unknown mutation '" + name + "'");
}

/// ‖P − η J⁻¹‖_F / ‖P‖_F.
inline double metric_deviation(const SymMatrix& cov, const SymMatrix& metric, double eta) {
  const Matrix implied = eta * inverse_psd(metric).matrix();
  return (cov.matrix() - implied).norm() / cov.matrix().norm();
}

struct DiscreteComparison {
  ComparisonReport report;
  HyperMap hyper;
  ekf::FilterTrace kalman;
  natgrad::GradTrace gradient;
};

/**
 * Runs the fading-memory EKF (gain form) and the exact-Fisher natural gradient
 * with mapped hyperparameters and J₀ = η₀ P₀⁻¹. State deviations are relative
 * to max(1, sup-norm of the Kalman trajectory).
 */
inline DiscreteComparison check_discrete(const Scenario& scenario, const Vector& s0,
                                         const SymMatrix& p0, const Schedule& alpha, double tol,
                                         double eta0 = 0.5, Mutation mutation = Mutation::none) {
  const std::size_t horizon = scenario.horizon();
  DiscreteComparison out;
  out.hyper = map_alpha_to_eta(alpha, eta0, horizon);

  ekf::EkfConfig kcfg;
  kcfg.noise = ekf::NoiseMode::fading;
  kcfg.form = ekf::UpdateForm::gain;
  kcfg.alpha = mutation == Mutation::drop_fading_factor ? constant_schedule(0.0)
                                                        : out.hyper.alpha_schedule();

  natgrad::NatGradConfig gcfg;
  gcfg.fisher = natgrad::FisherMode::exact;
  gcfg.eta = out.hyper.eta_schedule();
  if (mutation == Mutation::half_gamma) {
    std::vector<double> half = out.hyper.gamma;
    for (double& g : half) g *= 0.5;
    gcfg.gamma = table_schedule(std::move(half));
  } else {
    gcfg.gamma = out.hyper.gamma_schedule();
  }
  gcfg.transport_metric = mutation != Mutation::skip_metric_transport;

  const SymMatrix j0 = eta0 * inverse_psd(p0);
  out.kalman = ekf::run(scenario, kcfg, s0, p0);
  out.gradient = natgrad::run(scenario, gcfg, s0, j0, scenario.seed);

  double scale = 1.0;
  for (std::size_t t = 0; t <= horizon; ++t) {
    scale = std::max(scale, out.kalman.at(t).mean.lpNorm<Eigen::Infinity>());
  }
  ComparisonReport& rep = out.report;
  rep.tol = tol;
  for (std::size_t t = 0; t <= horizon; ++t) {
    const auto& k = out.kalman.at(t);
    const auto& g = out.gradient.at(t);
    rep.state_dev.push_back((k.mean - g.chart_value).lpNorm<Eigen::Infinity>() / scale);
    rep.metric_dev.push_back(metric_deviation(k.cov, g.metric, out.hyper.eta[t]));
  }
  rep.max_state_dev = *std::max_element(rep.state_dev.begin(), rep.state_dev.end());
  rep.max_metric_dev = *std::max_element(rep.metric_dev.begin(), rep.metric_dev.end());
  rep.passed = rep.max_state_dev <= tol && rep.max_metric_dev <= tol;
  return out;
}

struct ContinuousRun {
  double dt = 0.0;
  ComparisonReport report;
  bucy::ContinuousTrace kalman;
  bucy::ContinuousTrace gradient;
};

struct ContinuousComparison {
  std::vector<ContinuousRun> runs;  // in the order of the dt list
  /// Least-squares slope of log(max deviation) against log(dt).
  double state_order = std::numeric_limits<double>::quiet_NaN();
  double combined_order = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline double loglog_slope(const std::vector<double>& dts, const std::vector<double>& devs) {
  const std::size_t n = dts.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = std::log(dts[i]);
    ys[i] = std::log(std::max(devs[i], std::numeric_limits<double>::min()));
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/**
 * Integrates the Kalman–Bucy filter (Q = αP) and the chart-s_t natural gradient
 * (γ = η, η̇ = αη − η², J₀ = η₀ P₀⁻¹) on the same grid for each dt, and compares
 * the two at every grid point. `tol(dt)` sets the pass threshold per dt.
 */
inline ContinuousComparison check_continuous(const ContinuousModel& model, const Vector& s0,
                                             const SymMatrix& p0, const TimeFunction& alpha,
                                             const std::vector<double>& dts, double horizon,
                                             double eta0, const std::function<double(double)>& tol) {
  if (!(eta0 > 0.0 && eta0 <= 1.0)) throw DomainError("eta0 must lie in (0, 1]");
  ContinuousComparison out;
  const SymMatrix j0 = eta0 * inverse_psd(p0);
  std::vector<double> state_maxima, combined_maxima;
  for (double dt : dts) {
    bucy::IntegratorConfig cfg;
    cfg.dt = dt;
    cfg.horizon = horizon;
    ContinuousRun run;
    run.dt = dt;
    run.kalman = bucy::integrate_bucy(model, {s0, p0, 0.0}, alpha, cfg);
    run.gradient = bucy::integrate_cngd(model, {s0, j0, eta0, 0.0}, alpha, cfg);

    double scale = 1.0;
    for (const auto& k : run.kalman.samples) scale = std::max(scale, k.s.lpNorm<Eigen::Infinity>());
    ComparisonReport& rep = run.report;
    rep.tol = tol(dt);
    for (std::size_t i = 0; i < run.kalman.samples.size(); ++i) {
      const auto& k = run.kalman.samples[i];
      const auto& g = run.gradient.samples[i];
      rep.state_dev.push_back((k.s - g.s).lpNorm<Eigen::Infinity>() / scale);
      rep.metric_dev.push_back(metric_deviation(k.matrix, g.matrix, *g.eta));
    }
    rep.max_state_dev = *std::max_element(rep.state_dev.begin(), rep.state_dev.end());
    rep.max_metric_dev = *std::max_element(rep.metric_dev.begin(), rep.metric_dev.end());
    rep.passed = rep.max_state_dev <= rep.tol && rep.max_metric_dev <= rep.tol;
    state_maxima.push_back(rep.max_state_dev);
    combined_maxima.push_back(std::max(rep.max_state_dev, rep.max_metric_dev));
    out.runs.push_back(std::move(run));
  }
  out.state_order = detail::loglog_slope(dts, state_maxima);
  out.combined_order = detail::loglog_slope(dts, combined_maxima);
  return out;
}

}  // namespace natkf::equivalence
