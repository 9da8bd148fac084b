// Synthetic fODFs from symmetrized von Mises-Fisher mixtures, the diffusion
// signals they induce through the inverse Funk-Radon transform, and noisy
// observation of those signals.
#pragma once

#include "qspace/core.hpp"
#include "qspace/estimator.hpp"
#include "qspace/sphere.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace qspace {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; derives independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

struct VmfComponent {
  Directiond mean;
  double kappa = 10.0;
  double weight = 0.5;
};

/// Draw from VMF(mean, kappa) by Wood's inversion sampler on the 2-sphere.
Directiond sample_vmf(const Directiond& mean, double kappa, Rng& rng);
Directiond sample_vmf(const Directiond& mean, double kappa, std::uint64_t seed);

/// VMF density kappa / (4 pi sinh kappa) exp(kappa m.p).
double vmf_density(const Directiond& mean, double kappa, const Directiond& p);

struct GenerativeConfig {
  std::vector<Directiond> mean_directions{
      Directiond(1.0, 0.0, 0.0),
      Directiond(1.0 / std::sqrt(3.0), -(3.0 - std::sqrt(3.0)) / 6.0, (3.0 + std::sqrt(3.0)) / 6.0)};
  std::vector<double> weights{0.5, 0.5};
  double component_kappa = 10.0;
  double mean_kappa = 20.0;
  double peak_merge_deg = 15.0;
  int quadrature_resolution = 128;
  Vectord response;  // per even degree; empty means identity kernel

  void validate() const;
};

struct GroundTruth {
  Vectord fodf;    // fODF coefficients, integrating to 1
  Vectord signal;  // diffusion-signal coefficients
  std::vector<Directiond> component_means;
  std::vector<Directiond> peak_directions;  // one per antipodal pair
};

enum class NoiseModel {
  Gaussian,
  /// sigma * (chi^2_k - k) / sqrt(2k): centered, variance sigma^2, right-skewed.
  CenteredChiSquared,
};

struct NoiseSpec {
  double sigma = 0.01;
  NoiseModel model = NoiseModel::Gaussian;
  int chi_dof = 2;
};

/// Generator bound to a basis and generative configuration; caches the
/// projection quadrature.
class Simulator {
 public:
  Simulator(ShBasis basis, GenerativeConfig config = {});

  const ShBasis& basis() const { return basis_; }
  const GenerativeConfig& config() const { return config_; }

  /// Ground truth for fixed component means (no sampling).
  GroundTruth from_means(const std::vector<Directiond>& means) const;

  /// Draws component means around the configured directions, then builds the truth.
  GroundTruth generate_fodf(std::uint64_t seed) const;

  /// n independent ground truths; subject i uses seed mix_seed(seed, i).
  std::vector<GroundTruth> generate_cohort(int n, std::uint64_t seed) const;

  /// Unnormalized mixture density at p for the given means.
  double mixture_density(const std::vector<Directiond>& means, const Directiond& p) const;

 private:
  ShBasis basis_;
  GenerativeConfig config_;
  SphericalGrid quadrature_;
  Matrixd weighted_basis_;  // rows: w_q phi(p_q)^T
};

/// Evaluates the signal at each direction and adds i.i.d. noise.
std::vector<Observationd> observe(const ShBasis& basis, const GroundTruth& truth,
                                  const std::vector<Directiond>& design, const NoiseSpec& noise,
                                  std::uint64_t seed);

/// One row per subject, columns c0..c{J-1}; values printed with 17 significant digits.
void write_cohort_csv(const std::vector<Vectord>& coefficients, const std::filesystem::path& path);
std::vector<Vectord> read_cohort_csv(const std::filesystem::path& path);

}  // namespace qspace
