#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "natkf/bucy.hpp"
#include "natkf/natgrad.hpp"
#include "support/models.hpp"
#include "support/oracles.hpp"

using namespace natkf;
using namespace natkf::bucy;

namespace {

Vector scalar(double x) { return Vector::Constant(1, x); }
SymMatrix scalar_sym(double x) { return SymMatrix::identity(1, x); }

TimeFunction constant(double v) {
  return [v](double) { return v; };
}

// ṡ = 0, h = s, R = 1, y(t) = 0.
ContinuousModel riccati_model() {
  return testmodels::continuous_linear(Matrix::Zero(1, 1), Matrix::Identity(1, 1), Matrix::Identity(1, 1),
                                       [](double) { return Vector(Vector::Zero(1)); });
}

}  // namespace

TEST(InstLoglik, Examples) {
  EXPECT_DOUBLE_EQ(inst_loglik(scalar(3.0), scalar(0.0), scalar_sym(2.0)), 0.0);
  EXPECT_DOUBLE_EQ(inst_loglik(scalar(1.0), scalar(1.0), scalar_sym(1.0)), 0.5);
  oracle::Gen gen(1);
  for (int trial = 0; trial < 20; ++trial) {
    const double y = gen.normal();
    const double r = gen.uniform(0.1, 2.0);
    const double at_y = inst_loglik(scalar(y), scalar(y), scalar_sym(r));
    EXPECT_GT(at_y, inst_loglik(scalar(y), scalar(y + 0.01), scalar_sym(r)));
    EXPECT_GT(at_y, inst_loglik(scalar(y), scalar(y - 0.01), scalar_sym(r)));
    const double slope = oracle::central_gradient(
        [&](const oracle::Vec& h) { return inst_loglik(scalar(y), h, scalar_sym(r)); }, scalar(y))(0);
    EXPECT_NEAR(slope, 0.0, 1e-8);
  }
}

TEST(InstLoglikGrad, Examples) {
  const Matrix h = (Matrix(1, 2) << 0.3, -1.0).finished();
  EXPECT_EQ(inst_loglik_grad(scalar(0.7), scalar(0.7), scalar_sym(1.0), h).norm(), 0.0);
  EXPECT_EQ(inst_loglik_grad(scalar(0.7), scalar(0.1), scalar_sym(1.0), Matrix::Zero(1, 2)).norm(), 0.0);
}

TEST(InstLoglikGrad, MatchesFiniteDifferences) {
  oracle::Gen gen(2);
  const ContinuousModel pendulum = make_pendulum_ct_model();
  for (int trial = 0; trial < 100; ++trial) {
    const double t = gen.uniform(0.0, 5.0);
    const Vector s = gen.vector(2);
    const Vector want = oracle::central_gradient(
        [&](const oracle::Vec& x) { return inst_loglik(pendulum, x, t); }, s, 1e-6);
    const Vector got = inst_loglik_grad(pendulum, s, t).transpose();
    EXPECT_LE((got - want).norm(), 1e-6 * std::max(want.norm(), 1e-3));
  }
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = gen.integer(1, 4), m = gen.integer(1, 3);
    const Matrix hj = gen.matrix(m, n);
    const SymMatrix r(gen.spd(m));
    const Vector y = gen.vector(m);
    const Vector s = gen.vector(n);
    const Vector want = oracle::central_gradient(
        [&](const oracle::Vec& x) { return inst_loglik(y, Vector(hj * x), r); }, s, 1e-6);
    const Vector got = inst_loglik_grad(y, Vector(hj * s), r, hj).transpose();
    EXPECT_LE((got - want).norm(), 1e-6 * std::max(want.norm(), 1e-3));
  }
}

TEST(InstFisher, Examples) {
  EXPECT_EQ(inst_fisher(SymMatrix::identity(3), Matrix::Identity(3, 3)).matrix(), Matrix::Identity(3, 3));
  EXPECT_DOUBLE_EQ(inst_fisher(scalar_sym(4.0), Matrix::Constant(1, 1, 2.0))(0, 0), 1.0);
  oracle::Gen gen(3);
  CounterRng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix hj = gen.matrix(2, 3);
    const SymMatrix r(gen.spd(2));
    const SymMatrix discrete = natgrad::fisher_term(Vector::Zero(2), hj, ObservationFamily::gaussian(r),
                                                    natgrad::FisherMode::exact, 1, Vector::Zero(2), rng);
    EXPECT_LT((inst_fisher(r, hj).matrix() - discrete.matrix()).norm(), 1e-10);
  }
}

TEST(BucyDeriv, EquilibriumAndRiccati) {
  const ContinuousModel still = testmodels::continuous_linear(
      Matrix::Zero(2, 2), Matrix::Zero(1, 2), Matrix::Identity(1, 1), [](double) { return Vector(Vector::Zero(1)); });
  const auto [ds, dp] = bucy_deriv({Vector::Ones(2), SymMatrix::identity(2), 0.0}, Vector::Zero(1), still, 0.0);
  EXPECT_EQ(ds.norm(), 0.0);
  EXPECT_EQ(dp.matrix().norm(), 0.0);

  const auto [ds1, dp1] = bucy_deriv({scalar(0.0), scalar_sym(3.0), 0.0}, scalar(0.0), riccati_model(), 0.0);
  EXPECT_DOUBLE_EQ(dp1(0, 0), -9.0);
}

TEST(BucyDeriv, FadingWeightAddsAlphaP) {
  const ContinuousModel m = make_pendulum_ct_model();
  oracle::Gen gen(4);
  for (int trial = 0; trial < 20; ++trial) {
    const BucyState st{gen.vector(2), SymMatrix(gen.spd(2)), gen.uniform(0, 3)};
    const double alpha = gen.uniform(0.0, 2.0);
    const auto [ds0, dp0] = bucy_deriv(st, m.y(st.t), m, 0.0);
    const auto [ds1, dp1] = bucy_deriv(st, m.y(st.t), m, alpha);
    EXPECT_EQ(ds0, ds1);
    EXPECT_LT((dp1.matrix() - dp0.matrix() - alpha * st.P.matrix()).norm(), 1e-13);
  }
}

TEST(CngdDeriv, FrozenMetricAndZeroInnovation) {
  const ContinuousModel still = testmodels::continuous_linear(
      Matrix::Zero(2, 2), (Matrix(1, 2) << 1.0, 0.5).finished(), Matrix::Identity(1, 1),
      [](double) { return Vector(Vector::Zero(1)); });
  oracle::Gen gen(5);
  const CngdState st{gen.vector(2), SymMatrix(gen.spd(2)), 0.4, 0.0};
  EXPECT_EQ(cngd_deriv(st, gen.vector(1), still, 0.0).second.matrix().norm(), 0.0);

  const ContinuousModel m = make_pendulum_ct_model();
  const CngdState at{gen.vector(2), SymMatrix(gen.spd(2)), 0.4, 0.7};
  const auto [ds, dj] = cngd_deriv(at, m.h(at.s, at.t), m, 0.4);
  EXPECT_LT((ds - m.f(at.s, at.t)).norm(), 1e-15);
}

TEST(CngdDeriv, PointwiseIdentityWithKalmanBucy) {
  // With P = η J⁻¹ and γ = η: d(ηJ⁻¹)/dt = η̇J⁻¹ − ηJ⁻¹J̇J⁻¹ equals the Kalman–Bucy dP/dt
  // with fading weight η + η̇/η, and both state derivatives coincide.
  oracle::Gen gen(6);
  for (const ContinuousModel& m : {make_pendulum_ct_model(), make_linear_ct_model()}) {
    const Index n = m.dim_state;
    for (int trial = 0; trial < 100; ++trial) {
      const double t = gen.uniform(0.0, 5.0);
      const double eta = gen.uniform(0.05, 1.0);
      const double alpha = gen.uniform(0.0, 2.0);
      const CngdState cs{gen.vector(n), SymMatrix(gen.spd(n)), eta, t};
      const Matrix jinv = oracle::explicit_inverse(cs.Jcc.matrix());
      const BucyState bs{cs.s, SymMatrix(eta * jinv), t};

      const auto [ds_c, dj] = cngd_deriv(cs, m.y(t), m, eta);
      const double deta = eta_ode(eta, alpha);
      const Matrix dp_implied = deta * jinv - eta * jinv * dj.matrix() * jinv;
      const auto [ds_b, dp] = bucy_deriv(bs, m.y(t), m, eta + deta / eta);

      EXPECT_LE((ds_c - ds_b).norm(), 1e-10 * std::max(1.0, ds_b.norm()));
      EXPECT_LE((dp_implied - dp.matrix()).norm(), 1e-10 * std::max(1.0, dp.matrix().norm()));
      // η + η̇/η reduces to α.
      EXPECT_NEAR(eta + deta / eta, alpha, 1e-12);
    }
  }
}

TEST(EtaOde, FixedPointAndClosedForms) {
  EXPECT_EQ(eta_ode(0.3, 0.3), 0.0);
  EXPECT_EQ(eta_ode(2.0, 2.0), 0.0);

  // Harmonic case α = 0 and logistic case α = 0.5, integrated as a one-dimensional system.
  auto integrate_eta = [](double alpha, double eta0, double horizon, double dt) {
    Vector x = scalar(eta0);
    const auto steps = static_cast<int>(std::lround(horizon / dt));
    for (int k = 0; k < steps; ++k) {
      x = rk4_step([alpha](double, const Vector& v) { return scalar(eta_ode(v(0), alpha)); }, x, k * dt, dt);
    }
    return x(0);
  };
  EXPECT_NEAR(integrate_eta(0.0, 0.5, 4.0, 1e-3), oracle::eta_harmonic(0.5, 4.0), 1e-12);
  EXPECT_NEAR(integrate_eta(0.5, 0.1, 10.0, 1e-3), oracle::eta_logistic(0.5, 0.1, 10.0), 1e-8);
}

TEST(Integrate, ZeroFieldKeepsState) {
  const ContinuousModel still = testmodels::continuous_linear(
      Matrix::Zero(2, 2), Matrix::Zero(1, 2), Matrix::Identity(1, 1), [](double t) { return scalar(std::sin(t)); });
  IntegratorConfig cfg;
  cfg.dt = 0.05;
  cfg.horizon = 1.0;
  const Vector s0 = (Vector(2) << 0.4, -0.3).finished();
  const ContinuousTrace kb = integrate_bucy(still, {s0, SymMatrix::identity(2), 0.0}, constant(0.0), cfg);
  const ContinuousTrace ng = integrate_cngd(still, {s0, SymMatrix::identity(2), 0.5, 0.0}, constant(0.0), cfg);
  ASSERT_EQ(kb.samples.size(), 21u);
  EXPECT_DOUBLE_EQ(kb.samples.back().t, 1.0);
  for (const auto& smp : kb.samples) EXPECT_EQ(smp.s, s0);
  for (const auto& smp : ng.samples) EXPECT_EQ(smp.s, s0);
}

TEST(Integrate, RiccatiClosedForm) {
  IntegratorConfig cfg;
  cfg.dt = 1e-4;
  cfg.horizon = 1.0;
  for (double p0 : {0.5, 1.0, 4.0}) {
    const ContinuousTrace kb = integrate_bucy(riccati_model(), {scalar(1.0), scalar_sym(p0), 0.0}, constant(0.0), cfg);
    EXPECT_NEAR(kb.samples.back().matrix(0, 0), oracle::riccati_scalar(p0, 1.0), 1e-8);
  }
}

TEST(Integrate, EtaMatchesClosedFormInsideCngd) {
  IntegratorConfig cfg;
  cfg.dt = 1e-3;
  cfg.horizon = 1.0;
  const ContinuousModel m = make_pendulum_ct_model();
  const ContinuousTrace ng =
      integrate_cngd(m, {m.nominal_initial_state, SymMatrix::identity(2), 1.0, 0.0}, constant(0.0), cfg);
  EXPECT_NEAR(*ng.samples.back().eta, 0.5, 1e-8);
}

TEST(Integrate, PendulumSelfConvergence) {
  const ContinuousModel m = make_pendulum_ct_model();
  const BucyState init{m.nominal_initial_state, SymMatrix::identity(2), 0.0};
  auto run = [&](double dt) {
    IntegratorConfig cfg;
    cfg.dt = dt;
    cfg.horizon = 1.0;
    return integrate_bucy(m, init, constant(0.2), cfg);
  };
  const ContinuousTrace ref = run(0.00125);
  auto max_dev = [&](double dt) {
    const ContinuousTrace coarse = run(dt);
    const auto stride = static_cast<std::size_t>(std::lround(dt / 0.00125));
    double dev = 0.0;
    for (std::size_t i = 0; i < coarse.samples.size(); ++i) {
      dev = std::max(dev, (coarse.samples[i].s - ref.samples[i * stride].s).lpNorm<Eigen::Infinity>());
    }
    return dev;
  };
  const double coarse = max_dev(0.02);
  const double fine = max_dev(0.01);
  EXPECT_GT(coarse, 0.0);
  EXPECT_GE(coarse / fine, 8.0);
}

TEST(Integrate, FrozenFormSeenFromMovingChart) {
  // With H = 0 and γ = 0 the metric only follows the flow: J(t) = e^{−Fᵀt} J₀ e^{−Ft}.
  Matrix f(2, 2);
  f << -0.3, 1.0, -0.8, 0.1;
  const ContinuousModel m = testmodels::continuous_linear(f, Matrix::Zero(1, 2), Matrix::Identity(1, 1),
                                                          [](double) { return Vector(Vector::Zero(1)); });
  oracle::Gen gen(7);
  const Matrix j0 = gen.spd(2);
  IntegratorConfig cfg;
  cfg.dt = 1e-3;
  cfg.horizon = 1.0;
  cfg.couple_gamma = false;
  cfg.gamma = constant(0.0);
  const ContinuousTrace ng = integrate_cngd(m, {Vector::Ones(2), SymMatrix(j0), 0.5, 0.0}, constant(0.0), cfg);
  for (std::size_t i = 0; i < ng.samples.size(); i += 100) {
    const Matrix want = oracle::transported_form(j0, f, ng.samples[i].t);
    EXPECT_LE((ng.samples[i].matrix.matrix() - want).norm(), 1e-8) << "t=" << ng.samples[i].t;
  }
}

TEST(Integrate, PositivityIsMonitored) {
  Matrix indefinite(2, 2);
  indefinite << 1.0, 0.0, 0.0, -1.0;
  const ContinuousModel m = make_pendulum_ct_model();
  IntegratorConfig cfg;
  EXPECT_THROW(integrate_bucy(m, {Vector::Zero(2), SymMatrix(indefinite), 0.0}, constant(0.0), cfg), PositivityLost);
  EXPECT_THROW(integrate_cngd(m, {Vector::Zero(2), SymMatrix(indefinite), 0.5, 0.0}, constant(0.0), cfg),
               PositivityLost);
  EXPECT_THROW(bucy::detail::check_positive(SymMatrix::zero(2), 0.0, "P"), PositivityLost);
  Matrix nearly = Matrix::Identity(2, 2);
  nearly(1, 1) = 1e-15;
  EXPECT_THROW(bucy::detail::check_positive(SymMatrix(nearly), 0.0, "P"), PositivityLost);
  EXPECT_NO_THROW(bucy::detail::check_positive(SymMatrix::identity(2), 0.0, "P"));
}

TEST(Integrate, ConfigErrors) {
  const ContinuousModel m = make_pendulum_ct_model();
  IntegratorConfig cfg;
  cfg.dt = 2.0;
  cfg.horizon = 1.0;
  EXPECT_THROW(integrate_bucy(m, {Vector::Zero(2), SymMatrix::identity(2), 0.0}, constant(0.0), cfg), DomainError);
  cfg.dt = 0.1;
  EXPECT_THROW(integrate_cngd(m, {Vector::Zero(2), SymMatrix::identity(2), 0.0, 0.0}, constant(0.0), cfg),
               DomainError);
  cfg.couple_gamma = false;
  EXPECT_THROW(integrate_cngd(m, {Vector::Zero(2), SymMatrix::identity(2), 0.5, 0.0}, constant(0.0), cfg),
               DomainError);
}

TEST(Integrate, Deterministic) {
  const ContinuousModel m = make_pendulum_ct_model();
  IntegratorConfig cfg;
  cfg.dt = 0.01;
  const ContinuousTrace a = integrate_cngd(m, {m.nominal_initial_state, SymMatrix::identity(2), 0.5, 0.0}, constant(0.3), cfg);
  const ContinuousTrace b = integrate_cngd(m, {m.nominal_initial_state, SymMatrix::identity(2), 0.5, 0.0}, constant(0.3), cfg);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].s, b.samples[i].s);
    EXPECT_EQ(*a.samples[i].eta, *b.samples[i].eta);
  }
}
