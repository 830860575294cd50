// Small dense linear algebra and calculus helpers shared by every filter.
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "natkf/errors.hpp"

namespace natkf {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Matrix = Eigen::MatrixXd;

/// Returns (A + Aᵀ)/2.
inline Matrix symmetrize(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw DomainError("symmetrize: matrix is " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + ", expected square");
  }
  return 0.5 * (a + a.transpose());
}

/**
 * Square symmetric matrix. Every constructor symmetrizes its input, so the
 * stored entries are exactly symmetric. Used for covariances (P, R, Q) and
 * Fisher metrics (J).
 */
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Matrix& m) : m_(symmetrize(m)) {}

  static SymMatrix identity(Index n, double scale = 1.0) {
    return SymMatrix(scale * Matrix::Identity(n, n));
  }
  static SymMatrix zero(Index n) { return SymMatrix(Matrix::Zero(n, n)); }
  static SymMatrix diagonal(const Vector& d) { return SymMatrix(Matrix(d.asDiagonal())); }

  const Matrix& matrix() const { return m_; }
  Index dim() const { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }

  friend SymMatrix operator+(const SymMatrix& a, const SymMatrix& b) {
    return SymMatrix(a.m_ + b.m_);
  }
  friend SymMatrix operator-(const SymMatrix& a, const SymMatrix& b) {
    return SymMatrix(a.m_ - b.m_);
  }
  friend SymMatrix operator*(double c, const SymMatrix& a) { return SymMatrix(c * a.m_); }

 private:
  Matrix m_;
};

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}
inline bool all_finite(double x) { return std::isfinite(x); }

inline double min_eigenvalue(const SymMatrix& a) {
  if (a.dim() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.matrix(), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

/// Reciprocal condition estimate from an LU factorization (1-norm).
inline double rcond_estimate(const Matrix& a) {
  if (a.rows() == 0) return 1.0;
  Eigen::PartialPivLU<Matrix> lu(a);
  return lu.rcond();
}

namespace detail {
// Relative jitter levels tried after a failed factorization.
inline constexpr std::array<double, 3> kJitterLadder{1e-12, 1e-10, 1e-8};
}  // namespace detail

/**
 * Solves A·X = B for symmetric positive definite A by Cholesky factorization.
 * When the factorization fails, δ·trace(A)/dim is added to the diagonal for
 * δ in {1e-12, 1e-10, 1e-8} before giving up with SingularMatrix.
 */
template <class Derived>
Eigen::Matrix<double, Eigen::Dynamic, Derived::ColsAtCompileTime> solve_psd(
    const SymMatrix& a, const Eigen::MatrixBase<Derived>& b) {
  using Result = Eigen::Matrix<double, Eigen::Dynamic, Derived::ColsAtCompileTime>;
  const Index n = a.dim();
  if (b.rows() != n) {
    throw DomainError("solve_psd: right-hand side has " + std::to_string(b.rows()) +
                      " rows, expected " + std::to_string(n));
  }
  if (n == 0) return Result(0, b.cols());
  if (!all_finite(a.matrix())) throw SingularMatrix("solve_psd: matrix has non-finite entries");

  Eigen::LLT<Matrix> llt(a.matrix());
  if (llt.info() == Eigen::Success) return llt.solve(b);

  const double scale = std::abs(a.matrix().trace()) / static_cast<double>(n);
  for (double delta : detail::kJitterLadder) {
    Matrix jittered = a.matrix();
    jittered.diagonal().array() += delta * scale;
    llt.compute(jittered);
    if (llt.info() == Eigen::Success) return llt.solve(b);
  }
  throw SingularMatrix("solve_psd: matrix is not positive definite within the jitter budget");
}

inline SymMatrix inverse_psd(const SymMatrix& a) {
  return SymMatrix(solve_psd(a, Matrix::Identity(a.dim(), a.dim())));
}

/// How a model's Jacobians are obtained.
struct JacobianSpec {
  enum class Mode { analytic, finite_difference };
  Mode mode = Mode::analytic;
  /// Central-difference step; unset means sqrt(eps)·(1 + |x_j|) per coordinate.
  std::optional<double> step;
};

using VectorMap = std::function<Vector(const Vector&)>;

/**
 * Central-difference Jacobian; column j is
 * (map(x + h_j e_j) − map(x − h_j e_j)) / (2 h_j).
 */
inline Matrix fd_jacobian(const VectorMap& map, const Vector& x,
                          std::optional<double> step = std::nullopt) {
  if (step && !(*step > 0.0)) throw DomainError("fd_jacobian: step must be positive");
  const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  Matrix jac;
  for (Index j = 0; j < x.size(); ++j) {
    const double h = step ? *step : root_eps * (1.0 + std::abs(x(j)));
    Vector xp = x;
    Vector xm = x;
    xp(j) += h;
    xm(j) -= h;
    const Vector fp = map(xp);
    const Vector fm = map(xm);
    if (!all_finite(fp) || !all_finite(fm)) {
      throw NonFinite("fd_jacobian: map is non-finite at a probe point");
    }
    if (j == 0) jac.resize(fp.size(), x.size());
    // Divide by the realized step, not the nominal one.
    jac.col(j) = (fp - fm) / (xp(j) - xm(j));
  }
  if (x.size() == 0) jac.resize(map(x).size(), 0);
  return jac;
}

/// One classical fourth-order Runge–Kutta step of dx/dt = deriv(t, x).
template <class State, class Deriv>
State rk4_step(Deriv&& deriv, const State& x, double t, double dt) {
  if (!(dt > 0.0)) throw DomainError("rk4_step: dt must be positive");
  auto eval = [&](double tt, const State& xx) {
    State k = deriv(tt, xx);
    if (!all_finite(k)) throw NonFinite("rk4_step: derivative is non-finite");
    return k;
  };
  const State k1 = eval(t, x);
  const State k2 = eval(t + 0.5 * dt, State(x + (0.5 * dt) * k1));
  const State k3 = eval(t + 0.5 * dt, State(x + (0.5 * dt) * k2));
  const State k4 = eval(t + dt, State(x + dt * k3));
  return State(x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

}  // namespace natkf
