// Continuous-time pair: the extended Kalman–Bucy filter with pure fading
// memory (Q_t = α_t P_t) and the online natural gradient written in the chart
// "state at time t", with the learning rate co-integrated by η̇ = αη − η².
//
//   Kalman–Bucy:  ṡ = f + K(y − h),  K = P Hᵀ R⁻¹
//                 Ṗ = F P + P Fᵀ − K H P + α P
//   Natural grad: ṡ = f + η J⁻¹ Hᵀ R⁻¹ (y − h)
//                 J̇ = −Fᵀ J − J F − γ J + γ Hᵀ R⁻¹ H
#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "natkf/errors.hpp"
#include "natkf/model.hpp"
#include "natkf/numerics.hpp"
#include "natkf/schedule.hpp"

namespace natkf::bucy {

struct BucyState {
  Vector s;
  SymMatrix P;
  double t = 0.0;
};

struct CngdState {
  Vector s;
  SymMatrix Jcc;  // metric expressed in the chart s_t
  double eta = 1.0;
  double t = 0.0;
};

struct IntegratorConfig {
  double dt = 1e-3;
  double horizon = 1.0;
  /// γ_t = η_t; when false, `gamma` supplies γ(t).
  bool couple_gamma = true;
  TimeFunction gamma;
};

/// Instantaneous log-likelihood yᵀR⁻¹h − ½ hᵀR⁻¹h.
inline double inst_loglik(const Vector& y, const Vector& h_value, const SymMatrix& r) {
  const Vector rinv_h = solve_psd(r, h_value);
  return y.dot(rinv_h) - 0.5 * h_value.dot(rinv_h);
}

/// Gradient in s: (y − h)ᵀ R⁻¹ H.
inline RowVector inst_loglik_grad(const Vector& y, const Vector& h_value, const SymMatrix& r,
                                  const Matrix& h_jac) {
  return solve_psd(r, Vector(y - h_value)).transpose() * h_jac;
}

/// Instantaneous Fisher matrix in the chart s_t: Hᵀ R⁻¹ H.
inline SymMatrix inst_fisher(const SymMatrix& r, const Matrix& h_jac) {
  return SymMatrix(h_jac.transpose() * solve_psd(r, h_jac));
}

inline double inst_loglik(const ContinuousModel& model, const Vector& s, double t) {
  return inst_loglik(model.y(t), model.h(s, t), model.R(t));
}
inline RowVector inst_loglik_grad(const ContinuousModel& model, const Vector& s, double t) {
  return inst_loglik_grad(model.y(t), model.h(s, t), model.R(t), model.H(s, t));
}

/// Learning-rate ODE η̇ = αη − η².
inline double eta_ode(double eta, double alpha) { return alpha * eta - eta * eta; }

/// Time derivative of a Kalman–Bucy state with Q = αP.
inline std::pair<Vector, SymMatrix> bucy_deriv(const BucyState& state, const Vector& y,
                                               const ContinuousModel& model, double alpha) {
  const Matrix f_jac = model.F(state.s, state.t);
  const Matrix h_jac = model.H(state.s, state.t);
  const SymMatrix r = model.R(state.t);
  const Matrix& p = state.P.matrix();
  // K = P Hᵀ R⁻¹ = (R⁻¹ H P)ᵀ
  const Matrix gain = solve_psd(r, Matrix(h_jac * p)).transpose();
  Vector ds = model.f(state.s, state.t) + gain * (y - model.h(state.s, state.t));
  SymMatrix dp(f_jac * p + p * f_jac.transpose() - gain * h_jac * p + alpha * p);
  return {std::move(ds), std::move(dp)};
}

/// Time derivative of the chart-s_t natural gradient state (η is advanced separately).
inline std::pair<Vector, SymMatrix> cngd_deriv(const CngdState& state, const Vector& y,
                                               const ContinuousModel& model, double gamma) {
  const Matrix f_jac = model.F(state.s, state.t);
  const Matrix h_jac = model.H(state.s, state.t);
  const SymMatrix r = model.R(state.t);
  const Matrix& j = state.Jcc.matrix();
  const Vector score = inst_loglik_grad(y, model.h(state.s, state.t), r, h_jac).transpose();
  Vector ds = model.f(state.s, state.t) + state.eta * solve_psd(state.Jcc, score);
  SymMatrix dj(-f_jac.transpose() * j - j * f_jac - gamma * j +
               gamma * inst_fisher(r, h_jac).matrix());
  return {std::move(ds), std::move(dj)};
}

struct ContinuousSample {
  double t = 0.0;
  Vector s;
  SymMatrix matrix;           // P for Kalman–Bucy, Jcc for the natural gradient
  std::optional<double> eta;  // natural gradient only
};

enum class Kind { bucy, cngd };

struct ContinuousTrace {
  Kind kind = Kind::bucy;
  std::vector<ContinuousSample> samples;
};

namespace detail {

inline Vector pack(const Vector& s, const SymMatrix& m, std::optional<double> eta) {
  const Index n = s.size();
  Vector x(n + n * n + (eta ? 1 : 0));
  x.head(n) = s;
  x.segment(n, n * n) = m.matrix().reshaped();
  if (eta) x(n + n * n) = *eta;
  return x;
}

inline Vector unpack_state(const Vector& x, Index n) { return x.head(n); }
inline SymMatrix unpack_matrix(const Vector& x, Index n) {
  return SymMatrix(x.segment(n, n * n).reshaped(n, n));
}

// Positivity is monitored, not enforced.
inline void check_positive(const SymMatrix& m, double t, const char* what) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.matrix(), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  if (!(ev(0) >= 1e-13 * scale) || !(scale > 0.0)) {
    throw PositivityLost(std::string(what) + " lost positive definiteness at t=" + std::to_string(t));
  }
}

// Fixed grid 0, dt, 2dt, ..., with a shorter final step landing on the horizon.
inline std::vector<double> time_grid(const IntegratorConfig& cfg) {
  if (!(cfg.dt > 0.0) || !(cfg.horizon > 0.0) || cfg.dt > cfg.horizon * (1.0 + 1e-12)) {
    throw DomainError("integrator needs 0 < dt <= horizon");
  }
  const auto steps = static_cast<std::size_t>(std::ceil(cfg.horizon / cfg.dt - 1e-9));
  std::vector<double> grid(steps + 1);
  for (std::size_t k = 0; k < steps; ++k) grid[k] = static_cast<double>(k) * cfg.dt;
  grid[steps] = cfg.horizon;
  return grid;
}

}  // namespace detail

/// Fixed-step RK4 integration of the Kalman–Bucy filter from `init` over [init.t, init.t + horizon].
inline ContinuousTrace integrate_bucy(const ContinuousModel& model, const BucyState& init,
                                      const TimeFunction& alpha, const IntegratorConfig& cfg) {
  const Index n = model.dim_state;
  if (init.s.size() != n || init.P.dim() != n) throw DomainError("integrate_bucy: dimension mismatch");
  detail::check_positive(init.P, init.t, "P");
  auto field = [&](double t, const Vector& x) {
    const BucyState st{detail::unpack_state(x, n), detail::unpack_matrix(x, n), t};
    const auto [ds, dp] = bucy_deriv(st, model.y(t), model, alpha(t));
    return detail::pack(ds, dp, std::nullopt);
  };
  ContinuousTrace trace{Kind::bucy, {}};
  const std::vector<double> grid = detail::time_grid(cfg);
  trace.samples.reserve(grid.size());
  trace.samples.push_back({init.t, init.s, init.P, std::nullopt});
  Vector x = detail::pack(init.s, init.P, std::nullopt);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double t0 = init.t + grid[k - 1];
    const double t1 = init.t + grid[k];
    x = rk4_step(field, x, t0, t1 - t0);
    const SymMatrix p = detail::unpack_matrix(x, n);
    x.segment(n, n * n) = p.matrix().reshaped();
    detail::check_positive(p, t1, "P");
    trace.samples.push_back({t1, x.head(n), p, std::nullopt});
  }
  return trace;
}

/// Fixed-step RK4 integration of the natural gradient with η co-integrated.
inline ContinuousTrace integrate_cngd(const ContinuousModel& model, const CngdState& init,
                                      const TimeFunction& alpha, const IntegratorConfig& cfg) {
  const Index n = model.dim_state;
  if (init.s.size() != n || init.Jcc.dim() != n) throw DomainError("integrate_cngd: dimension mismatch");
  if (!(init.eta > 0.0)) throw DomainError("integrate_cngd: eta must be positive");
  if (!cfg.couple_gamma && !cfg.gamma) throw DomainError("integrate_cngd: uncoupled run needs gamma(t)");
  detail::check_positive(init.Jcc, init.t, "J");
  auto field = [&](double t, const Vector& x) {
    const CngdState st{detail::unpack_state(x, n), detail::unpack_matrix(x, n), x(n + n * n), t};
    const double gamma = cfg.couple_gamma ? st.eta : cfg.gamma(t);
    const auto [ds, dj] = cngd_deriv(st, model.y(t), model, gamma);
    return detail::pack(ds, dj, eta_ode(st.eta, alpha(t)));
  };
  ContinuousTrace trace{Kind::cngd, {}};
  const std::vector<double> grid = detail::time_grid(cfg);
  trace.samples.reserve(grid.size());
  trace.samples.push_back({init.t, init.s, init.Jcc, init.eta});
  Vector x = detail::pack(init.s, init.Jcc, init.eta);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double t0 = init.t + grid[k - 1];
    const double t1 = init.t + grid[k];
    x = rk4_step(field, x, t0, t1 - t0);
    const SymMatrix j = detail::unpack_matrix(x, n);
    x.segment(n, n * n) = j.matrix().reshaped();
    detail::check_positive(j, t1, "J");
    if (!(x(n + n * n) > 0.0)) throw PositivityLost("eta left (0, inf) at t=" + std::to_string(t1));
    trace.samples.push_back({t1, x.head(n), j, x(n + n * n)});
  }
  return trace;
}

}  // namespace natkf::bucy
