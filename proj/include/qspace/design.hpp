// Sampling-direction selection: the greedy trace-objective design (GDS), its
// multi-voxel extension, the greedy approximation certificate, and the
// electrostatic-repulsion baseline.
#pragma once

#include "qspace/core.hpp"
#include "qspace/prior.hpp"
#include "qspace/sphere.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace qspace {

/// Finite set of admissible sampling directions with an activity mask.
template <typename Scalar>
struct CandidateSet {
  std::vector<Direction<Scalar>> points;
  std::vector<bool> active;

  std::size_t size() const { return points.size(); }
};

using CandidateSetd = CandidateSet<double>;

/// Validates unit norms and pairwise separation (> 1e-6 rad); all points active.
template <typename Scalar>
CandidateSet<Scalar> make_candidates(std::vector<Direction<Scalar>> points) {
  for (const auto& p : points) require_unit(p);
  const Scalar min_cos = std::cos(Scalar(1e-6));
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      if (points[i].dot(points[j]) > min_cos)
        throw DomainError("duplicate candidate directions at indices " + std::to_string(i) +
                          " and " + std::to_string(j));
  CandidateSet<Scalar> out;
  out.active.assign(points.size(), true);
  out.points = std::move(points);
  return out;
}

template <typename Scalar>
struct Design {
  std::vector<int> selected;
  Scalar objective = Scalar(0);
  std::vector<Scalar> objective_history;  // g after each step
  Matrix<Scalar> inv_gram;                // Gamma^{-1}, M x M
  Matrix<Scalar> psi_rows;                // Psi_{M,K}
};

template <typename Scalar>
struct RegionDesign {
  std::vector<int> selected;
  Scalar objective = Scalar(0);  // weighted sum over voxels
  std::vector<Scalar> objective_history;
  std::vector<Scalar> voxel_objectives;
};

template <typename Scalar>
struct BoundCertificate {
  int m = 0;
  int M = 0;
  Scalar rho_1 = 0;
  Scalar rho_K = 0;
  Scalar lambda_psi_star = 0;
  Scalar noise_variance = 0;
  Scalar bound_factor = 0;
};

/// Eigenfunction values psi_K(p)^T for each point (rows).
template <typename Scalar>
Matrix<Scalar> eigenfunction_rows(const ShBasis& basis, const VoxelPrior<Scalar>& prior,
                                  const std::vector<Direction<Scalar>>& points) {
  if (points.empty()) return Matrix<Scalar>(0, prior.rank());
  return basis.evaluate(points) * prior.eigenvectors;
}

/// Gamma = Psi Lambda Psi^T + sigma^2 I.
template <typename Scalar>
Matrix<Scalar> observation_covariance(const Matrix<Scalar>& psi, const Vector<Scalar>& eigenvalues,
                                      Scalar noise_variance) {
  Matrix<Scalar> gamma = psi * eigenvalues.asDiagonal() * psi.transpose();
  gamma.diagonal().array() += noise_variance;
  return gamma;
}

/// g = trace(Lambda Psi^T Gamma^{-1} Psi Lambda) for a given Psi.
template <typename Scalar>
Scalar trace_objective(const Matrix<Scalar>& psi, const Vector<Scalar>& eigenvalues,
                       Scalar noise_variance) {
  if (psi.rows() == 0) return Scalar(0);
  Eigen::LLT<Matrix<Scalar>> llt(observation_covariance(psi, eigenvalues, noise_variance));
  if (llt.info() != Eigen::Success) throw NumericalError("observation covariance is not SPD");
  const Matrix<Scalar> psi_lambda = psi * eigenvalues.asDiagonal();
  return (psi_lambda.transpose() * llt.solve(psi_lambda)).trace();
}

/// Expected reduction in integrated squared error achieved by sampling `points`.
template <typename Scalar>
Scalar design_objective(const ShBasis& basis, const std::vector<Direction<Scalar>>& points,
                        const VoxelPrior<Scalar>& prior) {
  if (!(prior.noise_variance > 0)) throw DomainError("noise variance must be positive");
  return trace_objective(eigenfunction_rows(basis, prior, points), prior.eigenvalues,
                         prior.noise_variance);
}

namespace detail {

/// Appends a row and column to Gamma^{-1} given Gamma^{-1} h and the Schur complement.
template <typename DerivedInv, typename DerivedV>
Matrix<typename DerivedInv::Scalar> append_to_inverse(const Eigen::MatrixBase<DerivedInv>& inv_prev,
                                                      const Eigen::MatrixBase<DerivedV>& inv_h,
                                                      typename DerivedInv::Scalar schur) {
  using Scalar = typename DerivedInv::Scalar;
  if (!(schur > 0)) throw NumericalError("non-positive Schur complement in inverse update");
  const Eigen::Index n = inv_prev.rows();
  const Scalar a = Scalar(1) / schur;
  Matrix<Scalar> out(n + 1, n + 1);
  out.topLeftCorner(n, n) = inv_prev + a * inv_h * inv_h.transpose();
  out.topRightCorner(n, 1) = -a * inv_h;
  out.bottomLeftCorner(1, n) = -a * inv_h.transpose();
  out(n, n) = a;
  return out;
}

}  // namespace detail

/// Inverse of [[Gamma, h], [h^T, q]] from Gamma^{-1} by block elimination.
template <typename DerivedInv, typename DerivedH>
Matrix<typename DerivedInv::Scalar> rank_one_inverse_update(
    const Eigen::MatrixBase<DerivedInv>& inv_prev, const Eigen::MatrixBase<DerivedH>& h,
    typename DerivedInv::Scalar q) {
  using Scalar = typename DerivedInv::Scalar;
  const Eigen::Index n = inv_prev.rows();
  if (inv_prev.cols() != n || h.size() != n) throw DomainError("inverse update size mismatch");
  const Vector<Scalar> inv_h = inv_prev * h;
  return detail::append_to_inverse(inv_prev, inv_h, q - h.dot(inv_h));
}

namespace detail {

/// Greedy state for one voxel: selected rows of Psi, Gamma^{-1} and
/// C = Psi^T Gamma^{-1} Psi, which makes each candidate's gain O(K^2).
///
/// Once M > K the Schur complement q - h^T Gamma^{-1} h shrinks towards sigma^2
/// and forming it by subtraction amplifies drift in Gamma^{-1}. Both Gamma^{-1} h
/// and the Schur complement are instead taken from the K x K matrix
/// P = sigma^2 I + D Psi^T Psi D, D = Lambda^{1/2}, via the push-through identity.
template <typename Scalar>
class GreedyState {
 public:
  static constexpr int kRefreshInterval = 25;

  GreedyState(Matrix<Scalar> candidate_psi, Vector<Scalar> eigenvalues, Scalar noise_variance)
      : cand_psi_(std::move(candidate_psi)),
        lambda_(std::move(eigenvalues)),
        sigma2_(noise_variance),
        psi_(0, lambda_.size()),
        inv_(0, 0),
        gram_(Matrix<Scalar>::Zero(lambda_.size(), lambda_.size())),
        C_(Matrix<Scalar>::Zero(lambda_.size(), lambda_.size())) {
    if (!(sigma2_ > 0)) throw DomainError("noise variance must be positive");
    if ((lambda_.array() < 0).any()) throw DomainError("prior eigenvalues must be non-negative");
    sqrt_lambda_ = lambda_.cwiseSqrt();
    cand_psi_lambda_ = cand_psi_ * lambda_.asDiagonal();
    cand_q_ = (cand_psi_.cwiseProduct(cand_psi_lambda_)).rowwise().sum().array() + sigma2_;
  }

  /// Increase of g from appending each candidate: a * |Lambda (C Lambda psi - psi)|^2.
  Vector<Scalar> gains() const {
    const Matrix<Scalar> T = cand_psi_lambda_ * C_;
    const Vector<Scalar> quad = cand_psi_lambda_.cwiseProduct(T).rowwise().sum();
    const Vector<Scalar> schur = cand_q_ - quad;
    const Vector<Scalar> num = ((T - cand_psi_) * lambda_.asDiagonal()).rowwise().squaredNorm();
    return num.cwiseQuotient(schur.cwiseMax(std::numeric_limits<Scalar>::min()));
  }

  void append(int index) {
    const Vector<Scalar> psi = cand_psi_.row(index).transpose();
    const Eigen::Index m = psi_.rows();
    const auto D = sqrt_lambda_.asDiagonal();
    Matrix<Scalar> P = D * gram_ * D;
    P.diagonal().array() += sigma2_;
    Eigen::LLT<Matrix<Scalar>> llt(P);
    if (llt.info() != Eigen::Success) throw NumericalError("eigen-space Gram matrix is not SPD");
    const Vector<Scalar> d_psi = D * psi;
    const Vector<Scalar> inv_h = psi_ * (D * llt.solve(d_psi));
    const Scalar schur = sigma2_ + sigma2_ * llt.matrixL().solve(d_psi).squaredNorm();
    inv_ = append_to_inverse(inv_, inv_h, schur);
    gram_ += psi * psi.transpose();
    psi_.conservativeResize(m + 1, Eigen::NoChange);
    psi_.row(m) = psi.transpose();
    if ((m + 1) % kRefreshInterval == 0) refresh();
    C_ = psi_.transpose() * inv_ * psi_;
    objective_ = (lambda_.array().square() * C_.diagonal().array()).sum();
  }

  Scalar objective() const { return objective_; }
  const Matrix<Scalar>& inv_gram() const { return inv_; }
  const Matrix<Scalar>& psi_rows() const { return psi_; }
  Eigen::Index candidate_count() const { return cand_psi_.rows(); }

 private:
  void refresh() {
    Eigen::LLT<Matrix<Scalar>> llt(observation_covariance(psi_, lambda_, sigma2_));
    if (llt.info() != Eigen::Success) throw NumericalError("observation covariance is not SPD");
    inv_ = llt.solve(Matrix<Scalar>::Identity(psi_.rows(), psi_.rows()));
    inv_ = (inv_ + inv_.transpose()) / Scalar(2);
  }

  Matrix<Scalar> cand_psi_;
  Matrix<Scalar> cand_psi_lambda_;
  Vector<Scalar> cand_q_;
  Vector<Scalar> lambda_;
  Vector<Scalar> sqrt_lambda_;
  Scalar sigma2_;
  Matrix<Scalar> psi_;
  Matrix<Scalar> inv_;
  Matrix<Scalar> gram_;  // Psi^T Psi
  Matrix<Scalar> C_;
  Scalar objective_ = Scalar(0);
};

template <typename Scalar>
void check_budget(const CandidateSet<Scalar>& candidates, int budget) {
  if (budget < 0) throw DomainError("budget must be non-negative");
  const auto active = std::count(candidates.active.begin(), candidates.active.end(), true);
  if (budget > active)
    throw DomainError("budget " + std::to_string(budget) + " exceeds " + std::to_string(active) +
                      " active candidates");
}

/// argmax over eligible candidates; strict '>' keeps the lowest index on ties.
template <typename Scalar>
int argmax_eligible(const Vector<Scalar>& score, const std::vector<bool>& eligible) {
  int best = -1;
  Scalar best_value = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index n = 0; n < score.size(); ++n) {
    if (!eligible[static_cast<std::size_t>(n)]) continue;
    if (score[n] > best_value) {
      best_value = score[n];
      best = static_cast<int>(n);
    }
  }
  return best;
}

}  // namespace detail

/// Greedy design selection without replacement; ties go to the lowest index.
template <typename Scalar>
Design<Scalar> gds_select(const ShBasis& basis, const CandidateSet<Scalar>& candidates,
                          const VoxelPrior<Scalar>& prior, int budget) {
  detail::check_budget(candidates, budget);
  detail::GreedyState<Scalar> state(eigenfunction_rows(basis, prior, candidates.points),
                                    prior.eigenvalues, prior.noise_variance);
  std::vector<bool> eligible = candidates.active;
  Design<Scalar> out;
  for (int m = 0; m < budget; ++m) {
    const int pick = detail::argmax_eligible<Scalar>(state.gains(), eligible);
    state.append(pick);
    eligible[static_cast<std::size_t>(pick)] = false;
    out.selected.push_back(pick);
    out.objective_history.push_back(state.objective());
  }
  out.objective = state.objective();
  out.inv_gram = state.inv_gram();
  out.psi_rows = state.psi_rows();
  return out;
}

/// Greedy selection of one design for a set of voxels, maximizing sum_v w_v g_v.
template <typename Scalar>
RegionDesign<Scalar> gds_select_region(const ShBasis& basis, const CandidateSet<Scalar>& candidates,
                                       std::span<const VoxelPrior<Scalar>> priors,
                                       std::span<const Scalar> weights, int budget) {
  if (priors.empty()) throw DomainError("region selection needs at least one prior");
  if (priors.size() != weights.size()) throw DomainError("one weight per voxel required");
  Scalar total(0);
  for (Scalar w : weights) {
    if (w < 0) throw DomainError("voxel weights must be non-negative");
    total += w;
  }
  if (std::abs(total - Scalar(1)) > Scalar(1e-10)) throw DomainError("voxel weights must sum to 1");
  detail::check_budget(candidates, budget);

  std::vector<detail::GreedyState<Scalar>> states;
  states.reserve(priors.size());
  for (const auto& prior : priors)
    states.emplace_back(eigenfunction_rows(basis, prior, candidates.points), prior.eigenvalues,
                        prior.noise_variance);

  std::vector<bool> eligible = candidates.active;
  RegionDesign<Scalar> out;
  for (int m = 0; m < budget; ++m) {
    Vector<Scalar> score = Vector<Scalar>::Zero(static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t v = 0; v < states.size(); ++v) score += weights[v] * states[v].gains();
    const int pick = detail::argmax_eligible<Scalar>(score, eligible);
    Scalar objective(0);
    for (std::size_t v = 0; v < states.size(); ++v) {
      states[v].append(pick);
      objective += weights[v] * states[v].objective();
    }
    eligible[static_cast<std::size_t>(pick)] = false;
    out.selected.push_back(pick);
    out.objective_history.push_back(objective);
    out.objective = objective;
  }
  for (const auto& s : states) out.voxel_objectives.push_back(s.objective());
  return out;
}

template <typename Scalar>
RegionDesign<Scalar> gds_select_region(const ShBasis& basis, const CandidateSet<Scalar>& candidates,
                                       const std::vector<VoxelPrior<Scalar>>& priors,
                                       const std::vector<Scalar>& weights, int budget) {
  return gds_select_region(basis, candidates, std::span<const VoxelPrior<Scalar>>(priors),
                           std::span<const Scalar>(weights), budget);
}

/// 1 - exp(-(1/rho_1) / (1/rho_K + (m / sigma^2) lambda*) * m / M).
template <typename Scalar>
Scalar greedy_bound_factor(int m, int M, Scalar rho_1, Scalar rho_K, Scalar lambda_psi_star,
                           Scalar noise_variance) {
  const Scalar rate = (Scalar(1) / rho_1) /
                      (Scalar(1) / rho_K + Scalar(m) / noise_variance * lambda_psi_star);
  return Scalar(1) - std::exp(-rate * Scalar(m) / Scalar(M));
}

/// Approximation certificate for m greedy steps relative to the best M-point design.
template <typename Scalar>
BoundCertificate<Scalar> greedy_bound(const ShBasis& basis, const VoxelPrior<Scalar>& prior,
                                        const CandidateSet<Scalar>& candidates, int m, int M) {
  if (m < 1 || m > M) throw DomainError("bound requires 1 <= m <= M");
  if (prior.rank() < 1) throw DomainError("bound requires prior rank >= 1");
  const Matrix<Scalar> psi = eigenfunction_rows(basis, prior, candidates.points);
  Scalar lambda_star(0);
  for (Eigen::Index n = 0; n < psi.rows(); ++n) {
    if (!candidates.active[static_cast<std::size_t>(n)]) continue;
    // psi psi^T is rank one; its largest eigenvalue is |psi|^2.
    lambda_star = std::max(lambda_star, psi.row(n).squaredNorm());
  }
  BoundCertificate<Scalar> out;
  out.m = m;
  out.M = M;
  out.rho_1 = prior.eigenvalues[0];
  out.rho_K = prior.eigenvalues[prior.rank() - 1];
  out.lambda_psi_star = lambda_star;
  out.noise_variance = prior.noise_variance;
  out.bound_factor = greedy_bound_factor(m, M, out.rho_1, out.rho_K, lambda_star, out.noise_variance);
  return out;
}

// --- electrostatic repulsion ----------------------------------------------

struct EsrOptions {
  int iterations = 2000;
  double initial_step = 0.0;  // 0 means 0.01 / n
  std::uint64_t seed = 0;
};

struct EsrResult {
  std::vector<Directiond> directions;
  double initial_energy = 0.0;
  double final_energy = 0.0;
  int iterations_run = 0;
};

/// sum_{i<j} 1/|p_i - p_j| + 1/|p_i + p_j|.
double antipodal_energy(const std::vector<Directiond>& points);

/// Projected gradient descent with backtracking from a seeded, jittered
/// hemisphere spiral. The returned energy never exceeds the starting energy.
EsrResult esr_design(int n, const EsrOptions& options = {});

/// Smallest angle, in degrees, between any two points of {+p_i, -p_i}.
double min_antipodal_angle_deg(const std::vector<Directiond>& points);

}  // namespace qspace
