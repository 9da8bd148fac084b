#include "qspace/metrics.hpp"

#include <algorithm>
#include <numbers>

namespace qspace {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::pair<Directiond, Directiond> tangent_frame(const Directiond& n) {
  const Directiond helper = std::abs(n.x()) < 0.9 ? Directiond::UnitX() : Directiond::UnitY();
  Directiond e1 = (helper - helper.dot(n) * n).normalized();
  return {e1, n.cross(e1)};
}

}  // namespace

PeakFinder::PeakFinder(const ShBasis& basis, const PeakOptions& options)
    : PeakFinder(basis, make_grid(GridKind::Spiral, options.grid_size), options) {}

PeakFinder::PeakFinder(const ShBasis& basis, SphericalGrid grid, const PeakOptions& options)
    : basis_(basis), grid_(std::move(grid)), options_(options) {
  if (grid_.size() == 0) throw DomainError("peak detection grid is empty");
  if (options_.neighbors < 1) throw DomainError("peak detection needs at least one neighbor");
  if (!(options_.relative_threshold >= 0.0 && options_.relative_threshold <= 1.0))
    throw DomainError("relative threshold must lie in [0, 1]");
  grid_basis_ = basis_.evaluate(grid_.directions);

  const auto n = grid_.size();
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(options_.neighbors), n - 1);
  Matrixd P(3, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) P.col(static_cast<Eigen::Index>(i)) = grid_.directions[i];
  adjacency_.resize(n);
  std::vector<int> order(n);
  double nearest_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vectord cosines = P.transpose() * grid_.directions[i];
    for (std::size_t j = 0; j < n; ++j) order[j] = static_cast<int>(j);
    // Self has the largest cosine; take the next k.
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k + 1), order.end(),
                      [&](int a, int b) { return cosines[a] > cosines[b] || (cosines[a] == cosines[b] && a < b); });
    for (std::size_t t = 0, taken = 0; t <= k && taken < k; ++t) {
      if (order[t] == static_cast<int>(i)) continue;
      adjacency_[i].push_back(order[t]);
      ++taken;
    }
    if (!adjacency_[i].empty())
      nearest_sum += std::acos(std::clamp(cosines[adjacency_[i].front()], -1.0, 1.0));
  }
  spacing_deg_ = nearest_sum / static_cast<double>(n) / kDeg;
}

PeakSet PeakFinder::find(const Vectord& coefficients) const {
  basis_.require_coefficients(coefficients);
  const Vectord values = grid_basis_ * coefficients;
  PeakSet out;
  out.grid_spacing_deg = spacing_deg_;
  const double vmax = values.maxCoeff();
  if (!(vmax > 0.0)) return out;
  const double cutoff = options_.relative_threshold * vmax;

  auto eval = [&](const Directiond& p) { return basis_.evaluate(p).dot(coefficients); };

  std::vector<Peak> candidates;
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    const double v = values[static_cast<Eigen::Index>(i)];
    if (v < cutoff || v <= 0.0) continue;
    bool is_max = true;
    for (int j : adjacency_[i]) {
      if (!(v > values[j])) {
        is_max = false;
        break;
      }
    }
    if (!is_max) continue;

    Directiond p = grid_.directions[i];
    double fp = v;
    double step = options_.refine_step_deg * kDeg;
    constexpr double h = 1e-5;
    for (int s = 0; s < options_.refine_steps; ++s) {
      const auto [e1, e2] = tangent_frame(p);
      const double g1 = (eval((p + h * e1).normalized()) - eval((p - h * e1).normalized())) / (2 * h);
      const double g2 = (eval((p + h * e2).normalized()) - eval((p - h * e2).normalized())) / (2 * h);
      const double gn = std::hypot(g1, g2);
      if (gn == 0.0) break;
      const Directiond trial = (p + std::tan(step) * (g1 * e1 + g2 * e2) / gn).normalized();
      const double ft = eval(trial);
      if (ft > fp) {
        p = trial;
        fp = ft;
      } else {
        step *= 0.5;
      }
    }
    candidates.push_back({p, fp});
  }

  std::sort(candidates.begin(), candidates.end(),
            [](const Peak& a, const Peak& b) { return a.value > b.value; });
  const double merge_deg = 2.0 * spacing_deg_;
  for (const auto& c : candidates) {
    const bool duplicate = std::any_of(out.peaks.begin(), out.peaks.end(), [&](const Peak& q) {
      return axis_angle_deg(q.direction, c.direction) < merge_deg;
    });
    if (duplicate) continue;
    Peak rep = c;
    if (rep.direction.z() < 0.0) rep.direction = -rep.direction;
    out.peaks.push_back(rep);
  }
  return out;
}

PeakSet find_peaks(const ShBasis& basis, const Vectord& coefficients, const SphericalGrid& grid,
                   double relative_threshold) {
  PeakOptions options;
  options.relative_threshold = relative_threshold;
  return PeakFinder(basis, grid, options).find(coefficients);
}

namespace {

void require_same_length(const std::vector<PeakSet>& a, const std::vector<PeakSet>& b) {
  if (a.size() != b.size()) throw DomainError("estimate and truth lists differ in length");
  if (a.empty()) throw DomainError("peak comparison needs at least one item");
}

}  // namespace

double pfp(const std::vector<PeakSet>& estimates, const std::vector<PeakSet>& truths) {
  return 1.0 - peak_match_rate(estimates, truths);
}

double peak_match_rate(const std::vector<PeakSet>& estimates, const std::vector<PeakSet>& truths) {
  require_same_length(estimates, truths);
  std::size_t match = 0;
  for (std::size_t i = 0; i < estimates.size(); ++i)
    if (estimates[i].count() == truths[i].count()) ++match;
  return static_cast<double>(match) / static_cast<double>(estimates.size());
}

double crossing_angle_deg(const PeakSet& peaks) {
  if (peaks.count() < 2) return 0.0;
  return axis_angle_deg(peaks.peaks[0].direction, peaks.peaks[1].direction);
}

AngularError angular_error(const PeakSet& estimate, const PeakSet& truth) {
  if (truth.count() == 0) throw DomainError("angular error needs a non-empty truth peak set");
  AngularError out;
  out.estimate_empty = estimate.count() == 0;
  out.degrees = std::abs(crossing_angle_deg(estimate) - crossing_angle_deg(truth));
  return out;
}

}  // namespace qspace
