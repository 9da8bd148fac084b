#include "qspace/prior.hpp"

#include <cmath>

namespace qspace {

PriorField::PriorField(ShBasis basis, std::array<int, 3> dims, RankRule rule)
    : basis_(std::move(basis)), dims_(dims), rule_(rule) {
  for (int d : dims_)
    if (d < 1) throw DomainError("prior field dimensions must be >= 1");
}

void PriorField::set(const VoxelIndex& index, VoxelPriord prior) {
  for (int a = 0; a < 3; ++a)
    if (index[a] < 0 || index[a] >= dims_[a]) throw OutOfBoundsError("voxel index outside field");
  if (prior.dimension() != basis_.dimension())
    throw DomainError("prior dimension does not match field basis");
  voxels_.insert_or_assign(index, std::move(prior));
}

const VoxelPriord& PriorField::at(const VoxelIndex& index) const {
  auto it = voxels_.find(index);
  if (it == voxels_.end()) {
    throw OutOfBoundsError("no prior at voxel (" + std::to_string(index[0]) + ", " +
                           std::to_string(index[1]) + ", " + std::to_string(index[2]) + ")");
  }
  return it->second;
}

VoxelPriord interpolate_prior(const PriorField& field, const Eigen::Vector3d& query) {
  const auto& dims = field.dims();
  std::array<int, 3> lo{};
  std::array<double, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    const double q = query[a];
    if (!(q >= 0.0 && q <= dims[a] - 1)) throw OutOfBoundsError("query outside prior field");
    int i0 = static_cast<int>(std::floor(q));
    if (i0 > dims[a] - 2) i0 = std::max(0, dims[a] - 2);
    lo[a] = i0;
    frac[a] = dims[a] == 1 ? 0.0 : q - i0;
  }

  std::vector<const VoxelPriord*> neighbors;
  std::vector<double> weights;
  for (int corner = 0; corner < 8; ++corner) {
    double w = 1.0;
    VoxelIndex idx{};
    for (int a = 0; a < 3; ++a) {
      const int bit = (corner >> a) & 1;
      idx[a] = lo[a] + bit;
      w *= bit ? frac[a] : 1.0 - frac[a];
    }
    if (w == 0.0) continue;
    if (!field.contains(idx)) {
      throw OutOfBoundsError("incomplete neighborhood: missing prior at voxel (" +
                             std::to_string(idx[0]) + ", " + std::to_string(idx[1]) + ", " +
                             std::to_string(idx[2]) + ")");
    }
    neighbors.push_back(&field.at(idx));
    weights.push_back(w);
  }

  if (neighbors.size() == 1) return *neighbors.front();

  const int J = field.basis().dimension();
  Vectord mean = Vectord::Zero(J);
  Matrixd log_acc = Matrixd::Zero(J, J);
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    mean += weights[i] * neighbors[i]->mean;
    log_acc += weights[i] * spd_log_regularized(neighbors[i]->covariance);
  }
  Matrixd covariance = spd_exp(log_acc);
  return make_prior(std::move(mean), std::move(covariance), field.rank_rule(),
                    neighbors.front()->noise_variance);
}

double estimate_noise_variance(std::span<const Vectord> b0_samples) {
  const std::size_t n = b0_samples.size();
  if (n < 3) throw InsufficientDataError("noise estimation needs at least 3 b=0 repeats");
  const Eigen::Index V = b0_samples.front().size();
  if (V < 1) throw DomainError("b=0 samples are empty");
  Matrixd X(V, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (b0_samples[i].size() != V) throw DomainError("b=0 repeats have inconsistent lengths");
    X.col(static_cast<Eigen::Index>(i)) = b0_samples[i];
  }
  const Vectord means = X.rowwise().mean();
  if ((means.array() <= 0.0).any()) throw NumericalError("degenerate b=0 signal: voxel mean <= 0");
  const Matrixd scaled = (X.array().colwise() / means.array()).matrix();
  const Vectord scaled_means = scaled.rowwise().mean();
  const Matrixd centered = scaled.colwise() - scaled_means;
  const Vectord variances = centered.rowwise().squaredNorm() / double(n - 1);
  return variances.mean();
}

}  // namespace qspace
