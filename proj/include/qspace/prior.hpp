// Gaussian-process priors over spherical-harmonic coefficients.
#pragma once

#include "qspace/core.hpp"
#include "qspace/sphere.hpp"

#include <array>
#include <map>
#include <span>
#include <string>

namespace qspace {

/// How many covariance eigenpairs a prior keeps.
struct RankRule {
  enum class Kind { Fixed, VarianceFraction };
  Kind kind = Kind::VarianceFraction;
  int rank = 0;            // Fixed
  double fraction = 0.90;  // VarianceFraction

  static RankRule fixed(int k) { return {Kind::Fixed, k, 0.0}; }
  static RankRule variance(double tau) { return {Kind::VarianceFraction, 0, tau}; }

  bool operator==(const RankRule&) const = default;
};

template <typename Scalar>
struct Moments {
  Vector<Scalar> mean;
  Matrix<Scalar> covariance;
};

template <typename Scalar>
struct Eigenpairs {
  Vector<Scalar> values;   // descending, strictly positive
  Matrix<Scalar> vectors;  // orthonormal columns
};

/// Per-voxel prior: mean coefficients u, covariance Sigma, its rank-K
/// eigendecomposition (Lambda_K, B_K) and the measurement noise variance.
template <typename Scalar>
struct VoxelPrior {
  Vector<Scalar> mean;
  Matrix<Scalar> covariance;
  Vector<Scalar> eigenvalues;
  Matrix<Scalar> eigenvectors;
  Scalar noise_variance = Scalar(0);

  int dimension() const { return static_cast<int>(mean.size()); }
  int rank() const { return static_cast<int>(eigenvalues.size()); }
};

using VoxelPriord = VoxelPrior<double>;

// --- moments ---------------------------------------------------------------

/// Sample mean and unbiased (N - 1) sample covariance of coefficient vectors.
template <typename Scalar>
Moments<Scalar> empirical_moments(std::span<const Vector<Scalar>> fits) {
  if (fits.size() < 2) throw InsufficientDataError("empirical_moments needs at least 2 fits");
  const Eigen::Index J = fits.front().size();
  Matrix<Scalar> X(J, static_cast<Eigen::Index>(fits.size()));
  for (std::size_t i = 0; i < fits.size(); ++i) {
    if (fits[i].size() != J) throw DomainError("fits have inconsistent lengths");
    X.col(static_cast<Eigen::Index>(i)) = fits[i];
  }
  Moments<Scalar> out;
  out.mean = X.rowwise().mean();
  X.colwise() -= out.mean;
  out.covariance = X * X.transpose() / Scalar(fits.size() - 1);
  out.covariance = (out.covariance + out.covariance.transpose()) / Scalar(2);
  return out;
}

template <typename Scalar>
Moments<Scalar> empirical_moments(const std::vector<Vector<Scalar>>& fits) {
  return empirical_moments(std::span<const Vector<Scalar>>(fits));
}

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& M, double tol = 1e-12) {
  if (M.rows() != M.cols()) return false;
  if (M.size() == 0) return true;
  const double scale = std::max(1.0, double(M.cwiseAbs().maxCoeff()));
  return double((M - M.transpose()).cwiseAbs().maxCoeff()) <= tol * scale;
}

// --- rank truncation -------------------------------------------------------

/// Leading eigenpairs of a symmetric PSD covariance.
///
/// Eigenvalues at or below 1e-12 * rho_1 are never kept. Under the variance
/// rule K is the smallest count whose cumulative share reaches the fraction;
/// under a fixed rule K is capped by the number of admissible eigenvalues.
template <typename Derived>
Eigenpairs<typename Derived::Scalar> truncate_rank(const Eigen::MatrixBase<Derived>& sigma,
                                                   const RankRule& rule) {
  using Scalar = typename Derived::Scalar;
  if (!is_symmetric(sigma)) throw DomainError("covariance is not symmetric");
  if (rule.kind == RankRule::Kind::Fixed && rule.rank < 1)
    throw DomainError("fixed rank must be >= 1");
  if (rule.kind == RankRule::Kind::VarianceFraction && !(rule.fraction > 0 && rule.fraction <= 1))
    throw DomainError("variance fraction must lie in (0, 1]");

  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(sigma.derived());
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const Eigen::Index J = sigma.rows();
  // Eigen returns ascending order.
  Vector<Scalar> values = es.eigenvalues().reverse();
  Matrix<Scalar> vectors = es.eigenvectors().rowwise().reverse();

  const Scalar top = J > 0 ? values[0] : Scalar(0);
  Eigen::Index admissible = 0;
  if (top > 0) {
    while (admissible < J && values[admissible] > Scalar(1e-12) * top) ++admissible;
  }
  if (admissible == 0) throw NumericalError("degenerate covariance: no positive eigenvalues");

  Eigen::Index K = 0;
  if (rule.kind == RankRule::Kind::Fixed) {
    K = std::min<Eigen::Index>(rule.rank, admissible);
  } else {
    const Scalar total = values.head(admissible).sum();
    const Scalar target = Scalar(rule.fraction) * total - Scalar(1e-12) * total;
    Scalar cumulative(0);
    while (K < admissible) {
      cumulative += values[K++];
      if (cumulative >= target) break;
    }
  }
  return {values.head(K), vectors.leftCols(K)};
}

/// Builds a prior from moments, truncating the covariance by `rule`.
template <typename Scalar>
VoxelPrior<Scalar> make_prior(Vector<Scalar> mean, Matrix<Scalar> covariance, const RankRule& rule,
                              Scalar noise_variance) {
  if (mean.size() != covariance.rows()) throw DomainError("mean/covariance size mismatch");
  if (!(noise_variance > 0)) throw DomainError("noise variance must be positive");
  // Stored files keep only the lower triangle, so the prior holds the exactly symmetric part.
  covariance = (covariance + covariance.transpose()).eval() / Scalar(2);
  auto eig = truncate_rank(covariance, rule);
  return {std::move(mean), std::move(covariance), std::move(eig.values), std::move(eig.vectors),
          noise_variance};
}

// --- SPD geometry ----------------------------------------------------------

/// Regularizer added to rank-deficient covariances before taking logs.
template <typename Derived>
typename Derived::Scalar spd_regularizer(const Eigen::MatrixBase<Derived>& M) {
  using Scalar = typename Derived::Scalar;
  return Scalar(1e-10) * M.trace() / Scalar(M.rows());
}

/// Matrix logarithm V log(D) V^T of a symmetric positive-definite matrix.
template <typename Derived>
Matrix<typename Derived::Scalar> spd_log(const Eigen::MatrixBase<Derived>& M) {
  using Scalar = typename Derived::Scalar;
  if (!is_symmetric(M)) throw DomainError("spd_log requires a symmetric matrix");
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(M.derived());
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  if (es.eigenvalues().minCoeff() <= 0)
    throw NumericalError("matrix is not positive definite (min eigenvalue " +
                         std::to_string(double(es.eigenvalues().minCoeff())) + ")");
  const auto& V = es.eigenvectors();
  Matrix<Scalar> out = V * es.eigenvalues().array().log().matrix().asDiagonal() * V.transpose();
  return (out + out.transpose()) / Scalar(2);
}

/// Matrix exponential of a symmetric matrix.
template <typename Derived>
Matrix<typename Derived::Scalar> spd_exp(const Eigen::MatrixBase<Derived>& S) {
  using Scalar = typename Derived::Scalar;
  if (!is_symmetric(S)) throw DomainError("spd_exp requires a symmetric matrix");
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(S.derived());
  const auto& V = es.eigenvectors();
  Matrix<Scalar> out = V * es.eigenvalues().array().exp().matrix().asDiagonal() * V.transpose();
  return (out + out.transpose()) / Scalar(2);
}

/// spd_log after adding the documented regularizer when M is not strictly positive definite.
template <typename Derived>
Matrix<typename Derived::Scalar> spd_log_regularized(const Eigen::MatrixBase<Derived>& M) {
  using Scalar = typename Derived::Scalar;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(M.derived(), Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() > 0) return spd_log(M);
  const Scalar eps = spd_regularizer(M);
  if (!(eps > 0)) throw NumericalError("cannot regularize a matrix with non-positive trace");
  Matrix<Scalar> shifted = M.derived();
  shifted.diagonal().array() += eps;
  return spd_log(shifted);
}

/// Weighted Karcher mean under the log-Euclidean metric: exp(sum_i w_i log M_i).
template <typename Scalar>
Matrix<Scalar> log_euclidean_mean(std::span<const Matrix<Scalar>> matrices,
                                  std::span<const Scalar> weights) {
  if (matrices.empty()) throw DomainError("log_euclidean_mean needs at least one matrix");
  if (matrices.size() != weights.size()) throw DomainError("one weight per matrix required");
  Scalar total(0);
  for (Scalar w : weights) {
    if (w < 0) throw DomainError("weights must be non-negative");
    total += w;
  }
  if (std::abs(total - Scalar(1)) > Scalar(1e-10)) throw DomainError("weights must sum to 1");
  const Eigen::Index J = matrices.front().rows();
  Matrix<Scalar> acc = Matrix<Scalar>::Zero(J, J);
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    if (weights[i] == 0) continue;
    if (matrices[i].rows() != J || matrices[i].cols() != J)
      throw DomainError("matrices have inconsistent sizes");
    acc += weights[i] * spd_log(matrices[i]);
  }
  return spd_exp(acc);
}

template <typename Scalar>
Matrix<Scalar> log_euclidean_mean(const std::vector<Matrix<Scalar>>& matrices,
                                  const std::vector<Scalar>& weights) {
  return log_euclidean_mean(std::span<const Matrix<Scalar>>(matrices),
                            std::span<const Scalar>(weights));
}

// --- prior field -----------------------------------------------------------

using VoxelIndex = std::array<int, 3>;

/// Template-space collection of voxel priors on a regular 3-d grid.
class PriorField {
 public:
  PriorField(ShBasis basis, std::array<int, 3> dims, RankRule rule);

  const ShBasis& basis() const { return basis_; }
  const std::array<int, 3>& dims() const { return dims_; }
  const RankRule& rank_rule() const { return rule_; }
  std::size_t size() const { return voxels_.size(); }

  /// Inserts or replaces; the prior must match the field's basis dimension.
  void set(const VoxelIndex& index, VoxelPriord prior);
  bool contains(const VoxelIndex& index) const { return voxels_.count(index) != 0; }
  const VoxelPriord& at(const VoxelIndex& index) const;
  const std::map<VoxelIndex, VoxelPriord>& voxels() const { return voxels_; }

 private:
  ShBasis basis_;
  std::array<int, 3> dims_;
  RankRule rule_;
  std::map<VoxelIndex, VoxelPriord> voxels_;
};

/// Prior at a continuous voxel coordinate.
///
/// The mean is the trilinear blend of the eight neighbor means; the
/// covariance is their log-Euclidean mean under the same weights, with
/// zero-weight neighbors dropped; eigenpairs are recomputed with the field's
/// rank rule. Noise variance is taken from the neighbors (it is shared).
VoxelPriord interpolate_prior(const PriorField& field, const Eigen::Vector3d& query);

/// Pooled noise variance from n >= 3 repeated b=0 acquisitions over V voxels.
///
/// Each voxel is scaled by its b=0 mean so the variance is on the attenuation
/// scale; per-voxel unbiased variances are averaged.
double estimate_noise_variance(std::span<const Vectord> b0_samples);

}  // namespace qspace
