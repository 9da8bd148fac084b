// Signal reconstruction: penalized least squares (SHLS) for dense data and
// the conditional-expectation estimator (CU) for sparse samples.
#pragma once

#include "qspace/core.hpp"
#include "qspace/prior.hpp"
#include "qspace/sphere.hpp"

#include <vector>

namespace qspace {

template <typename Scalar>
struct Observation {
  Direction<Scalar> direction;
  Scalar value;
};

using Observationd = Observation<double>;

template <typename Scalar>
struct FitResult {
  Vector<Scalar> coefficients;
  Vector<Scalar> posterior_scores;  // conditional mean of the K eigen-scores; empty for SHLS
  Scalar lambda = Scalar(0);        // SHLS only
};

using FitResultd = FitResult<double>;

/// Design matrix: row m is phi(p_m)^T.
template <typename Scalar>
Matrix<Scalar> design_matrix(const ShBasis& basis, const std::vector<Observation<Scalar>>& obs) {
  Matrix<Scalar> Phi(static_cast<Eigen::Index>(obs.size()), basis.dimension());
  for (std::size_t m = 0; m < obs.size(); ++m)
    Phi.row(static_cast<Eigen::Index>(m)) = basis.evaluate(obs[m].direction).transpose();
  return Phi;
}

template <typename Scalar>
Vector<Scalar> observed_values(const std::vector<Observation<Scalar>>& obs) {
  Vector<Scalar> s(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t m = 0; m < obs.size(); ++m) s[static_cast<Eigen::Index>(m)] = obs[m].value;
  return s;
}

/// Conditional mean of the eigen-scores given the observations,
/// Lambda Psi^T (Psi Lambda Psi^T + sigma^2 I)^{-1} (s - mu).
template <typename Scalar>
Vector<Scalar> cu_posterior_coeffs(const ShBasis& basis,
                                   const std::vector<Observation<Scalar>>& obs,
                                   const VoxelPrior<Scalar>& prior) {
  if (prior.dimension() != basis.dimension()) throw DomainError("prior/basis dimension mismatch");
  if (!(prior.noise_variance > 0)) throw DomainError("noise variance must be positive");
  const Eigen::Index K = prior.rank();
  if (obs.empty()) return Vector<Scalar>::Zero(K);

  const Matrix<Scalar> Phi = design_matrix(basis, obs);
  const Matrix<Scalar> Psi = Phi * prior.eigenvectors;
  const Vector<Scalar> residual = observed_values(obs) - Phi * prior.mean;
  const Matrix<Scalar> LPsiT = prior.eigenvalues.asDiagonal() * Psi.transpose();
  Matrix<Scalar> Gamma = Psi * LPsiT;
  Gamma.diagonal().array() += prior.noise_variance;
  Eigen::LLT<Matrix<Scalar>> llt(Gamma);
  if (llt.info() != Eigen::Success) throw NumericalError("observation covariance is not SPD");
  return LPsiT * llt.solve(residual);
}

/// Conditional-expectation reconstruction: u + B_K * xi_hat.
template <typename Scalar>
FitResult<Scalar> cu_fit(const ShBasis& basis, const std::vector<Observation<Scalar>>& obs,
                         const VoxelPrior<Scalar>& prior) {
  FitResult<Scalar> out;
  out.posterior_scores = cu_posterior_coeffs(basis, obs, prior);
  out.coefficients = prior.mean + prior.eigenvectors * out.posterior_scores;
  return out;
}

/// c = (Phi^T Phi + lambda R)^{-1} Phi^T s, R the Laplace-Beltrami penalty.
FitResultd shls_fit(const ShBasis& basis, const std::vector<Observationd>& obs, double lambda);

struct GcvResult {
  double lambda = 0.0;
  double score = 0.0;
  FitResultd fit;
  std::vector<double> scores;  // GCV value per grid entry; +inf where degenerate
};

/// GCV(lambda) = M RSS / (M - tr H)^2; the minimizer over the grid, ties to the larger lambda.
GcvResult gcv_select(const ShBasis& basis, const std::vector<Observationd>& obs,
                     const std::vector<double>& lambda_grid);

/// `count` log-spaced values in [lo, hi].
std::vector<double> log_grid(double lo, double hi, int count);

/// Default GCV grid: 20 log-spaced values in [1e-7, 1e-1].
std::vector<double> default_lambda_grid();

}  // namespace qspace
