#pragma once

#include <stdexcept>
#include <string>

namespace natkf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A matrix that must be invertible (or positive definite) is not, even after jitter.
class SingularMatrix : public Error {
 public:
  using Error::Error;
};

/// A map or vector field produced NaN or infinity.
class NonFinite : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside the domain of the operation (e.g. a boundary mean parameter).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An observation is not in the support of its family.
class OutOfSupport : public Error {
 public:
  using Error::Error;
};

/// A covariance or metric lost positive definiteness during integration.
class PositivityLost : public Error {
 public:
  using Error::Error;
};

class UnknownModel : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace natkf
