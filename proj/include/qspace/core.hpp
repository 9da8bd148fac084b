// Common types and the error hierarchy shared by every qspace module.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace qspace {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Direction = Eigen::Matrix<Scalar, 3, 1>;

using Vectord = Vector<double>;
using Matrixd = Matrix<double>;
using Directiond = Direction<double>;

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside an operation's domain (bad degree, non-unit direction, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Configuration or file content that fails validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Too few samples for an estimator.
class InsufficientDataError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Query outside a prior field, or missing neighbors.
class OutOfBoundsError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Numerically degenerate problem: singular systems, non-SPD input, etc.
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kUnitTolerance = 1e-12;

template <typename Scalar>
bool is_unit(const Direction<Scalar>& p,
             Scalar tol = std::max(Scalar(kUnitTolerance), 16 * std::numeric_limits<Scalar>::epsilon())) {
  return std::abs(p.squaredNorm() - Scalar(1)) <= tol;
}

template <typename Scalar>
void require_unit(const Direction<Scalar>& p) {
  if (!is_unit(p)) {
    throw DomainError("direction is not unit-norm (|p|^2 = " +
                      std::to_string(double(p.squaredNorm())) + ")");
  }
}

/// Angle between the axes through a and b, in degrees, folded to [0, 90].
template <typename Scalar>
Scalar axis_angle_deg(const Direction<Scalar>& a, const Direction<Scalar>& b) {
  Scalar c = std::min(Scalar(1), std::abs(a.dot(b)));
  return std::acos(c) * Scalar(180) / std::numbers::pi_v<Scalar>;
}

}  // namespace qspace
