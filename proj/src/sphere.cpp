#include "qspace/sphere.hpp"

#include <numbers>

namespace qspace {

ShBasis::ShBasis(int max_degree) : max_degree_(max_degree) {
  if (max_degree < 0 || max_degree % 2 != 0)
    throw DomainError("spherical-harmonic degree must be even and non-negative");
  dimension_ = dimension_for(max_degree);
  degrees_.reserve(static_cast<std::size_t>(dimension_));
  orders_.reserve(static_cast<std::size_t>(dimension_));
  for (int l = 0; l <= max_degree; l += 2) {
    for (int m = -l; m <= l; ++m) {
      degrees_.push_back(l);
      orders_.push_back(m);
    }
  }
}

Vectord identity_response(const ShBasis& basis) { return Vectord::Ones(basis.degree_count()); }

Vectord gaussian_response(const ShBasis& basis, double width) {
  Vectord r(basis.degree_count());
  for (int i = 0; i < r.size(); ++i) {
    const double l = 2.0 * i;
    r[i] = std::exp(-width * l * (l + 1.0));
  }
  return r;
}

SphericalGrid equiangular_grid(int n_theta, int n_phi) {
  if (n_theta < 1 || n_phi < 1) throw DomainError("grid resolution must be >= 1");
  constexpr double pi = std::numbers::pi;

  // Fejer's first rule on [-1, 1] at Chebyshev nodes x_j = cos(theta_j).
  Vectord ring_weights(n_theta);
  for (int j = 0; j < n_theta; ++j) {
    const double theta = (2.0 * j + 1.0) * pi / (2.0 * n_theta);
    double sum = 0.0;
    for (int k = 1; k <= n_theta / 2; ++k) sum += std::cos(2.0 * k * theta) / (4.0 * k * k - 1.0);
    ring_weights[j] = 2.0 / n_theta * (1.0 - 2.0 * sum);
  }

  SphericalGrid grid;
  grid.directions.reserve(static_cast<std::size_t>(n_theta) * static_cast<std::size_t>(n_phi));
  grid.weights.resize(static_cast<Eigen::Index>(n_theta) * n_phi);
  Eigen::Index idx = 0;
  for (int j = 0; j < n_theta; ++j) {
    const double theta = (2.0 * j + 1.0) * pi / (2.0 * n_theta);
    for (int k = 0; k < n_phi; ++k) {
      const double phi = 2.0 * pi * k / n_phi;
      grid.directions.emplace_back(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                                   std::cos(theta));
      grid.weights[idx++] = ring_weights[j] * 2.0 * pi / n_phi;
    }
  }
  grid.antipodally_symmetric = n_phi % 2 == 0;
  return grid;
}

namespace {

SphericalGrid spiral(int n, bool hemisphere) {
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  SphericalGrid grid;
  grid.directions.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double z = hemisphere ? 1.0 - (i + 0.5) / n : 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * i;
    Directiond p(r * std::cos(phi), r * std::sin(phi), z);
    grid.directions.push_back(p.normalized());
  }
  grid.weights = Vectord::Constant(n, (hemisphere ? 2.0 : 4.0) * std::numbers::pi / n);
  grid.antipodally_symmetric = false;
  return grid;
}

}  // namespace

SphericalGrid make_grid(GridKind kind, int n) {
  if (n < 1) throw DomainError("grid size must be >= 1");
  switch (kind) {
    case GridKind::Equiangular:
      return equiangular_grid(n, n);
    case GridKind::Spiral:
      return spiral(n, false);
    case GridKind::HemisphereSpiral:
      return spiral(n, true);
  }
  throw DomainError("unknown grid kind");
}

}  // namespace qspace
