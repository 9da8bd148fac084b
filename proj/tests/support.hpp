#pragma once

#include "qspace/prior.hpp"
#include "qspace/sphere.hpp"

#include <random>
#include <vector>

namespace qspace::testing {

using Gen = std::mt19937_64;

inline Directiond random_direction(Gen& g) {
  std::normal_distribution<double> n(0.0, 1.0);
  Directiond p(n(g), n(g), n(g));
  return p.normalized();
}

inline std::vector<Directiond> random_directions(Gen& g, int count) {
  std::vector<Directiond> out;
  for (int i = 0; i < count; ++i) out.push_back(random_direction(g));
  return out;
}

inline Vectord random_vector(Gen& g, int n, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Vectord v(n);
  for (int i = 0; i < n; ++i) v[i] = d(g);
  return v;
}

inline Matrixd random_matrix(Gen& g, int rows, int cols) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrixd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = d(g);
  return m;
}

/// A A^T / n + shift I, well conditioned for moderate shift.
inline Matrixd random_spd(Gen& g, int n, double shift = 0.1) {
  const Matrixd a = random_matrix(g, n, n);
  Matrixd s = a * a.transpose() / n;
  s.diagonal().array() += shift;
  return s;
}

/// Prior on `basis` with a random rank-K eigenbasis and decaying eigenvalues.
inline VoxelPriord random_prior(Gen& g, const ShBasis& basis, int K, double noise_variance) {
  const int J = basis.dimension();
  Eigen::HouseholderQR<Matrixd> qr(random_matrix(g, J, J));
  const Matrixd Q = qr.householderQ();
  Vectord rho(K);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (int k = 0; k < K; ++k) rho[k] = u(g) / (1.0 + k);
  std::sort(rho.data(), rho.data() + K, std::greater<>());
  VoxelPriord p;
  p.mean = random_vector(g, J, 0.1);
  p.eigenvectors = Q.leftCols(K);
  p.eigenvalues = rho;
  p.covariance = p.eigenvectors * rho.asDiagonal() * p.eigenvectors.transpose();
  p.noise_variance = noise_variance;
  return p;
}

/// Rank-one prior whose single eigenfunction is the basis function with index j.
inline VoxelPriord basis_function_prior(const ShBasis& basis, int j, double rho, double noise_variance) {
  const int J = basis.dimension();
  VoxelPriord p;
  p.mean = Vectord::Zero(J);
  p.eigenvectors = Matrixd::Zero(J, 1);
  p.eigenvectors(j, 0) = 1.0;
  p.eigenvalues = Vectord::Constant(1, rho);
  p.covariance = p.eigenvectors * rho * p.eigenvectors.transpose();
  p.noise_variance = noise_variance;
  return p;
}

}  // namespace qspace::testing

namespace qspace::testing {

/// Rank-one prior whose eigenfunction takes `value` at p (requires |value| < |phi(p)|).
inline VoxelPriord prior_with_value_at(const ShBasis& basis, const Directiond& p, double value, double rho,
                                       double noise_variance) {
  const Vectord phi = basis.evaluate(p);
  Vectord w = Vectord::Unit(basis.dimension(), basis.dimension() - 1);
  w -= w.dot(phi.normalized()) * phi.normalized();
  w.normalize();
  const double alpha = value / phi.norm();
  VoxelPriord prior;
  prior.mean = Vectord::Zero(basis.dimension());
  prior.eigenvectors = alpha * phi.normalized() + std::sqrt(1 - alpha * alpha) * w;
  prior.eigenvalues = Vectord::Constant(1, rho);
  prior.covariance = rho * prior.eigenvectors * prior.eigenvectors.transpose();
  prior.noise_variance = noise_variance;
  return prior;
}

}  // namespace qspace::testing
