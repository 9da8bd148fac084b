// Reconstruction metrics: integrated squared error, spherical peak detection,
// peak-count mismatch rate and angular error.
#pragma once

#include "qspace/core.hpp"
#include "qspace/sphere.hpp"

#include <vector>

namespace qspace {

/// Integrated squared difference of two expansions; exact by orthonormality.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar ise(const Eigen::MatrixBase<DerivedA>& f,
                              const Eigen::MatrixBase<DerivedB>& g) {
  if (f.size() != g.size()) throw DomainError("ise: coefficient vectors use different bases");
  return (f - g).squaredNorm();
}

struct Peak {
  Directiond direction;
  double value = 0.0;
};

struct PeakSet {
  std::vector<Peak> peaks;  // descending value, one per antipodal pair
  double grid_spacing_deg = 0.0;

  std::size_t count() const { return peaks.size(); }
};

struct PeakOptions {
  int grid_size = 4096;
  int neighbors = 8;
  double relative_threshold = 0.3;
  int refine_steps = 10;
  double refine_step_deg = 0.5;
};

/// Local-maximum detector over a spiral grid with k-nearest-neighbor adjacency.
///
/// Grid maxima are refined by a few gradient-ascent steps on the expansion,
/// antipodal and near-coincident peaks are merged, and peaks below
/// relative_threshold * (grid maximum) are discarded.
class PeakFinder {
 public:
  PeakFinder(const ShBasis& basis, SphericalGrid grid, const PeakOptions& options = {});
  PeakFinder(const ShBasis& basis, const PeakOptions& options = {});

  PeakSet find(const Vectord& coefficients) const;

  const SphericalGrid& grid() const { return grid_; }
  double spacing_deg() const { return spacing_deg_; }

 private:
  ShBasis basis_;
  SphericalGrid grid_;
  PeakOptions options_;
  Matrixd grid_basis_;
  std::vector<std::vector<int>> adjacency_;
  double spacing_deg_ = 0.0;
};

PeakSet find_peaks(const ShBasis& basis, const Vectord& coefficients, const SphericalGrid& grid,
                   double relative_threshold = 0.3);

/// Fraction of items whose estimated peak count differs from the truth.
double pfp(const std::vector<PeakSet>& estimates, const std::vector<PeakSet>& truths);

/// Fraction of items whose estimated peak count matches the truth (1 - pfp).
double peak_match_rate(const std::vector<PeakSet>& estimates, const std::vector<PeakSet>& truths);

/// 0 for fewer than two peaks, else the axis angle between the two highest peaks.
double crossing_angle_deg(const PeakSet& peaks);

struct AngularError {
  double degrees = 0.0;
  bool estimate_empty = false;  // no peaks detected; treated as single-fiber
};

/// |theta(estimate) - theta(truth)| in degrees.
AngularError angular_error(const PeakSet& estimate, const PeakSet& truth);

}  // namespace qspace
