// Real symmetric spherical harmonics, Funk-Radon machinery and quadrature grids.
#pragma once

#include "qspace/core.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

namespace qspace {

/// Real, orthonormal spherical-harmonic basis restricted to even degrees.
///
/// Index j runs over (l, m) with l in {0, 2, ..., L} and m in [-l, l];
/// j = l(l+1)/2 + m. Orders m < 0 carry sqrt(2) P_l^|m| cos(|m| phi),
/// m > 0 carry sqrt(2) P_l^m sin(m phi), m = 0 the zonal harmonic.
class ShBasis {
 public:
  explicit ShBasis(int max_degree = 8);

  int max_degree() const { return max_degree_; }
  int dimension() const { return dimension_; }
  int degree(int j) const { return degrees_[static_cast<std::size_t>(j)]; }
  int order(int j) const { return orders_[static_cast<std::size_t>(j)]; }
  /// Number of even degrees, L/2 + 1.
  int degree_count() const { return max_degree_ / 2 + 1; }

  static int dimension_for(int max_degree) { return (max_degree + 1) * (max_degree + 2) / 2; }
  static int index(int l, int m) { return l * (l + 1) / 2 + m; }

  bool operator==(const ShBasis& other) const { return max_degree_ == other.max_degree_; }

  template <typename Scalar>
  Vector<Scalar> evaluate(const Direction<Scalar>& p) const;

  /// Row i holds the basis evaluated at points[i].
  template <typename Scalar>
  Matrix<Scalar> evaluate(const std::vector<Direction<Scalar>>& points) const;

  template <typename Derived>
  void require_coefficients(const Eigen::MatrixBase<Derived>& c) const {
    if (c.size() != dimension_) {
      throw DomainError("coefficient vector has length " + std::to_string(c.size()) +
                        ", basis dimension is " + std::to_string(dimension_));
    }
  }

 private:
  int max_degree_;
  int dimension_;
  std::vector<int> degrees_;
  std::vector<int> orders_;
};

/// P_l(0) for even l: (-1)^(l/2) (l-1)!! / l!!.
template <typename Scalar = double>
Scalar legendre_at_zero(int l) {
  if (l < 0 || l % 2 != 0) throw DomainError("legendre_at_zero requires even l >= 0");
  Scalar value(1);
  for (int k = 2; k <= l; k += 2) value *= -Scalar(k - 1) / Scalar(k);
  return value;
}

/// Per-coefficient Funk-Radon eigenvalue 2 pi P_l(0).
template <typename Scalar = double>
Vector<Scalar> frt_eigenvalues(const ShBasis& basis) {
  Vector<Scalar> out(basis.dimension());
  for (int j = 0; j < basis.dimension(); ++j)
    out[j] = Scalar(2) * std::numbers::pi_v<Scalar> * legendre_at_zero<Scalar>(basis.degree(j));
  return out;
}

template <typename Derived>
Vector<typename Derived::Scalar> funk_radon_transform(const ShBasis& basis,
                                                      const Eigen::MatrixBase<Derived>& c) {
  using Scalar = typename Derived::Scalar;
  basis.require_coefficients(c);
  return frt_eigenvalues<Scalar>(basis).cwiseProduct(c.derived());
}

template <typename Derived>
Vector<typename Derived::Scalar> inverse_frt(const ShBasis& basis,
                                             const Eigen::MatrixBase<Derived>& c) {
  using Scalar = typename Derived::Scalar;
  basis.require_coefficients(c);
  return c.derived().cwiseQuotient(frt_eigenvalues<Scalar>(basis));
}

/// Checks a per-degree response vector (one entry per even degree) for use as a kernel.
template <typename Derived>
void require_response(const ShBasis& basis, const Eigen::MatrixBase<Derived>& response) {
  if (response.size() != basis.degree_count()) {
    throw DomainError("response needs one entry per even degree (" +
                      std::to_string(basis.degree_count()) + "), got " +
                      std::to_string(response.size()));
  }
}

/// Forward single-fiber convolution: multiplies each degree block by its response value.
template <typename Derived, typename DerivedR>
Vector<typename Derived::Scalar> spherical_convolution(const ShBasis& basis,
                                                       const Eigen::MatrixBase<Derived>& c,
                                                       const Eigen::MatrixBase<DerivedR>& response) {
  basis.require_coefficients(c);
  require_response(basis, response);
  Vector<typename Derived::Scalar> out = c;
  for (int j = 0; j < basis.dimension(); ++j) out[j] *= response[basis.degree(j) / 2];
  return out;
}

/// Diagonal deconvolution of ODF coefficients by a per-degree response.
template <typename Derived, typename DerivedR>
Vector<typename Derived::Scalar> sharpening_deconvolution(
    const ShBasis& basis, const Eigen::MatrixBase<Derived>& c_odf,
    const Eigen::MatrixBase<DerivedR>& response) {
  basis.require_coefficients(c_odf);
  require_response(basis, response);
  for (Eigen::Index i = 0; i < response.size(); ++i) {
    if (response[i] == 0) {
      throw NumericalError("singular deconvolution kernel: response at degree " +
                           std::to_string(2 * i) + " is zero");
    }
  }
  Vector<typename Derived::Scalar> out = c_odf;
  for (int j = 0; j < basis.dimension(); ++j) out[j] /= response[basis.degree(j) / 2];
  return out;
}

/// Identity kernel: deconvolution leaves coefficients unchanged.
Vectord identity_response(const ShBasis& basis);

/// Axially symmetric Gaussian-like kernel, r_l = exp(-width * l (l + 1)).
Vectord gaussian_response(const ShBasis& basis, double width = 0.01);

/// Diagonal of the squared Laplace-Beltrami operator: l^2 (l+1)^2 per index.
template <typename Scalar = double>
Eigen::DiagonalMatrix<Scalar, Eigen::Dynamic> laplace_beltrami_penalty(const ShBasis& basis) {
  Vector<Scalar> d(basis.dimension());
  for (int j = 0; j < basis.dimension(); ++j) {
    const Scalar l = Scalar(basis.degree(j));
    d[j] = l * l * (l + 1) * (l + 1);
  }
  return Eigen::DiagonalMatrix<Scalar, Eigen::Dynamic>(d);
}

enum class GridKind {
  Equiangular,       // n x n (theta, phi) grid with exact Fejer weights in cos(theta)
  Spiral,            // n-point golden-angle spiral over the full sphere
  HemisphereSpiral,  // n-point spiral over z > 0, one representative per antipodal pair
};

struct SphericalGrid {
  std::vector<Directiond> directions;
  Vectord weights;
  bool antipodally_symmetric = false;

  std::size_t size() const { return directions.size(); }
  /// Quadrature of sampled values.
  double integrate(const Vectord& values) const { return weights.dot(values); }
};

/// For Equiangular, n is the per-axis resolution (n^2 points total).
SphericalGrid make_grid(GridKind kind, int n);

/// Equiangular grid with n_theta latitude rings and n_phi longitudes.
///
/// Ring weights are Fejer's first rule in x = cos(theta): exact for polynomials
/// of degree < n_theta in x, so band-limited products integrate exactly.
SphericalGrid equiangular_grid(int n_theta, int n_phi);

// ---------------------------------------------------------------------------

template <typename Scalar>
Vector<Scalar> ShBasis::evaluate(const Direction<Scalar>& p) const {
  require_unit(p);
  const int L = max_degree_;
  const Scalar z = std::clamp(p.z(), Scalar(-1), Scalar(1));
  const Scalar s = std::sqrt(std::max(Scalar(0), p.x() * p.x() + p.y() * p.y()));
  const Scalar phi = std::atan2(p.y(), p.x());
  const Scalar inv4pi = Scalar(1) / (Scalar(4) * std::numbers::pi_v<Scalar>);
  const Scalar sqrt2 = std::numbers::sqrt2_v<Scalar>;

  // Normalized associated Legendre values P(l, m), including sqrt((2l+1)/4pi (l-m)!/(l+m)!).
  Matrix<Scalar> P = Matrix<Scalar>::Zero(L + 1, L + 1);
  Scalar pmm = std::sqrt(inv4pi);
  for (int m = 0; m <= L; ++m) {
    if (m > 0) pmm *= std::sqrt(Scalar(2 * m + 1) / Scalar(2 * m)) * s;
    P(m, m) = pmm;
    if (m + 1 <= L) P(m + 1, m) = z * std::sqrt(Scalar(2 * m + 3)) * pmm;
    for (int l = m + 2; l <= L; ++l) {
      const Scalar a = std::sqrt(Scalar(4 * l * l - 1) / Scalar(l * l - m * m));
      const Scalar b = std::sqrt(Scalar((l - 1) * (l - 1) - m * m) / Scalar(4 * (l - 1) * (l - 1) - 1));
      P(l, m) = a * (z * P(l - 1, m) - b * P(l - 2, m));
    }
  }

  Vector<Scalar> out(dimension_);
  for (int l = 0; l <= L; l += 2) {
    out[index(l, 0)] = P(l, 0);
    for (int m = 1; m <= l; ++m) {
      out[index(l, -m)] = sqrt2 * P(l, m) * std::cos(Scalar(m) * phi);
      out[index(l, m)] = sqrt2 * P(l, m) * std::sin(Scalar(m) * phi);
    }
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> ShBasis::evaluate(const std::vector<Direction<Scalar>>& points) const {
  Matrix<Scalar> out(static_cast<Eigen::Index>(points.size()), dimension_);
  for (std::size_t i = 0; i < points.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = evaluate(points[i]).transpose();
  return out;
}

template <typename Scalar>
Vector<Scalar> evaluate_basis(const ShBasis& basis, const Direction<Scalar>& p) {
  return basis.evaluate(p);
}

}  // namespace qspace
