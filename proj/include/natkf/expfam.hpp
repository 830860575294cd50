// Exponential-family observation models in mean parameterization.
//
// The mean parameter ŷ is the expectation of the sufficient statistics T(y).
// Observations are stored as vectors: the raw value for gaussian families,
// a single 0/1 entry for bernoulli, and a single class index for categorical.
#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "natkf/errors.hpp"
#include "natkf/numerics.hpp"
#include "natkf/random.hpp"

namespace natkf {

using Observation = Vector;

enum class FamilyKind { gaussian, bernoulli, categorical };

inline const char* to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::gaussian: return "gaussian";
    case FamilyKind::bernoulli: return "bernoulli";
    case FamilyKind::categorical: return "categorical";
  }
  return "?";
}

class ObservationFamily {
 public:
  /// Gaussian with known covariance R (must be SPD).
  static ObservationFamily gaussian(const SymMatrix& noise_cov) {
    if (noise_cov.dim() == 0) throw DomainError("gaussian family: empty covariance");
    Eigen::LLT<Matrix> llt(noise_cov.matrix());
    if (llt.info() != Eigen::Success || !all_finite(noise_cov.matrix())) {
      throw DomainError("gaussian family: covariance is not positive definite");
    }
    ObservationFamily fam(FamilyKind::gaussian);
    fam.noise_cov_ = noise_cov;
    fam.noise_chol_ = llt.matrixL();
    return fam;
  }
  static ObservationFamily gaussian(double variance) {
    return gaussian(SymMatrix::identity(1, variance));
  }
  static ObservationFamily bernoulli() { return ObservationFamily(FamilyKind::bernoulli); }
  static ObservationFamily categorical(int classes) {
    if (classes < 2) throw DomainError("categorical family needs at least 2 classes");
    ObservationFamily fam(FamilyKind::categorical);
    fam.classes_ = classes;
    return fam;
  }

  FamilyKind kind() const { return kind_; }
  int classes() const { return classes_; }
  const SymMatrix& noise_cov() const { return noise_cov_; }
  const Matrix& noise_chol() const { return noise_chol_; }

  /// Dimension of ŷ and of T(y).
  Index mean_dim() const {
    switch (kind_) {
      case FamilyKind::gaussian: return noise_cov_.dim();
      case FamilyKind::bernoulli: return 1;
      case FamilyKind::categorical: return classes_ - 1;
    }
    return 0;
  }
  /// Length of the stored observation vector.
  Index obs_dim() const { return kind_ == FamilyKind::gaussian ? noise_cov_.dim() : 1; }

  std::string describe() const {
    switch (kind_) {
      case FamilyKind::gaussian: return "gaussian(dim=" + std::to_string(noise_cov_.dim()) + ")";
      case FamilyKind::bernoulli: return "bernoulli";
      case FamilyKind::categorical: return "categorical(K=" + std::to_string(classes_) + ")";
    }
    return "?";
  }

 private:
  explicit ObservationFamily(FamilyKind kind) : kind_(kind) {}

  FamilyKind kind_;
  int classes_ = 0;
  SymMatrix noise_cov_;
  Matrix noise_chol_;
};

namespace detail {

inline void check_mean_dim(const ObservationFamily& fam, const Vector& yhat) {
  if (yhat.size() != fam.mean_dim()) {
    throw DomainError("mean parameter has dimension " + std::to_string(yhat.size()) +
                      ", family " + fam.describe() + " expects " +
                      std::to_string(fam.mean_dim()));
  }
}

// Strict interior of the mean-parameter domain.
inline void check_interior(const ObservationFamily& fam, const Vector& yhat) {
  check_mean_dim(fam, yhat);
  if (!all_finite(yhat)) throw DomainError("mean parameter is non-finite");
  switch (fam.kind()) {
    case FamilyKind::gaussian: return;
    case FamilyKind::bernoulli:
      if (!(yhat(0) > 0.0 && yhat(0) < 1.0)) {
        throw DomainError("bernoulli mean " + std::to_string(yhat(0)) + " is not in (0, 1)");
      }
      return;
    case FamilyKind::categorical:
      if (!((yhat.array() > 0.0).all() && (yhat.array() < 1.0).all() && yhat.sum() < 1.0)) {
        throw DomainError("categorical mean is not in the open simplex");
      }
      return;
  }
}

}  // namespace detail

/// T(y): the identity for gaussian, y for bernoulli, one-hot over the first K−1 classes.
inline Vector sufficient_stats(const ObservationFamily& fam, const Observation& y) {
  switch (fam.kind()) {
    case FamilyKind::gaussian:
      if (y.size() != fam.obs_dim()) throw OutOfSupport("gaussian observation has wrong dimension");
      if (!all_finite(y)) throw OutOfSupport("gaussian observation is non-finite");
      return y;
    case FamilyKind::bernoulli:
      if (y.size() != 1 || !(y(0) == 0.0 || y(0) == 1.0)) {
        throw OutOfSupport("bernoulli observation must be 0 or 1");
      }
      return y;
    case FamilyKind::categorical: {
      if (y.size() != 1) throw OutOfSupport("categorical observation must be a single class index");
      const double c = y(0);
      if (!(c >= 0.0 && c < fam.classes() && c == std::floor(c))) {
        throw OutOfSupport("class index " + std::to_string(c) + " is outside [0, " +
                           std::to_string(fam.classes()) + ")");
      }
      Vector t = Vector::Zero(fam.classes() - 1);
      const auto k = static_cast<Index>(c);
      if (k < fam.classes() - 1) t(k) = 1.0;
      return t;
    }
  }
  return {};
}

/// Covariance of T(y) under mean ŷ; singular on the domain boundary.
inline SymMatrix cov_suffstats(const ObservationFamily& fam, const Vector& yhat) {
  detail::check_interior(fam, yhat);
  switch (fam.kind()) {
    case FamilyKind::gaussian: return fam.noise_cov();
    case FamilyKind::bernoulli: return SymMatrix::identity(1, yhat(0) * (1.0 - yhat(0)));
    case FamilyKind::categorical: {
      Matrix c = -yhat * yhat.transpose();
      c.diagonal() += yhat;
      return SymMatrix(c);
    }
  }
  return {};
}

/// ln p(y | ŷ) up to an additive constant that does not depend on ŷ.
inline double log_density(const ObservationFamily& fam, const Observation& y, const Vector& yhat) {
  const Vector t = sufficient_stats(fam, y);
  detail::check_interior(fam, yhat);
  switch (fam.kind()) {
    case FamilyKind::gaussian: {
      const Vector e = t - yhat;
      return -0.5 * e.dot(solve_psd(fam.noise_cov(), e));
    }
    case FamilyKind::bernoulli:
      return t(0) == 1.0 ? std::log(yhat(0)) : std::log1p(-yhat(0));
    case FamilyKind::categorical: {
      const auto k = static_cast<Index>(y(0));
      return k < fam.classes() - 1 ? std::log(yhat(k)) : std::log1p(-yhat.sum());
    }
  }
  return 0.0;
}

/// ∂ ln p(y|ŷ)/∂ŷ = (T(y) − ŷ)ᵀ Cov(T)⁻¹.
inline RowVector grad_logp_wrt_mean(const ObservationFamily& fam, const Observation& y,
                                    const Vector& yhat) {
  const Vector e = sufficient_stats(fam, y) - yhat;
  return solve_psd(cov_suffstats(fam, yhat), e).transpose();
}

/// Fisher matrix with respect to the mean parameter: Cov(T)⁻¹.
inline SymMatrix fisher_wrt_mean(const ObservationFamily& fam, const Vector& yhat) {
  return inverse_psd(cov_suffstats(fam, yhat));
}

/// Draws y ~ p(·|ŷ) from the caller's stream.
inline Observation sample(const ObservationFamily& fam, const Vector& yhat, CounterRng& rng) {
  detail::check_interior(fam, yhat);
  switch (fam.kind()) {
    case FamilyKind::gaussian: {
      Vector z(yhat.size());
      for (Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
      return yhat + fam.noise_chol() * z;
    }
    case FamilyKind::bernoulli:
      return Vector::Constant(1, rng.uniform() < yhat(0) ? 1.0 : 0.0);
    case FamilyKind::categorical: {
      const double u = rng.uniform();
      double cumulative = 0.0;
      for (Index k = 0; k < yhat.size(); ++k) {
        cumulative += yhat(k);
        if (u < cumulative) return Vector::Constant(1, static_cast<double>(k));
      }
      return Vector::Constant(1, static_cast<double>(fam.classes() - 1));
    }
  }
  return {};
}

/**
 * Natural gradient of ŷ ↦ E_{y~p(·|ŷ)} f(y), estimated as the empirical
 * covariance Cov(f(y), T(y)) over n draws (normalized by n).
 */
template <class Fn>
Vector natgrad_of_expectation(const ObservationFamily& fam, const Vector& yhat, Fn&& f,
                              std::size_t n, CounterRng& rng) {
  if (n == 0) throw DomainError("natgrad_of_expectation: need at least one sample");
  std::vector<double> values(n);
  Matrix stats(fam.mean_dim(), static_cast<Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const Observation y = sample(fam, yhat, rng);
    values[i] = f(y);
    stats.col(static_cast<Index>(i)) = sufficient_stats(fam, y);
  }
  double mean_f = 0.0;
  for (double v : values) mean_f += v;
  mean_f /= static_cast<double>(n);
  const Vector mean_t = stats.rowwise().mean();
  Vector cov = Vector::Zero(fam.mean_dim());
  for (std::size_t i = 0; i < n; ++i) {
    cov += (values[i] - mean_f) * (stats.col(static_cast<Index>(i)) - mean_t);
  }
  return cov / static_cast<double>(n);
}

}  // namespace natkf
