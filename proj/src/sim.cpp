#include "qspace/sim.hpp"

#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace qspace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

/// Orthonormal pair spanning the plane perpendicular to unit n.
std::pair<Directiond, Directiond> tangent_frame(const Directiond& n) {
  const Directiond helper = std::abs(n.x()) < 0.9 ? Directiond::UnitX() : Directiond::UnitY();
  Directiond e1 = (helper - helper.dot(n) * n).normalized();
  Directiond e2 = n.cross(e1);
  return {e1, e2};
}

}  // namespace

Directiond sample_vmf(const Directiond& mean, double kappa, Rng& rng) {
  if (!(kappa > 0.0)) throw DomainError("VMF concentration must be positive");
  require_unit(mean);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = 1.0 - unif(rng);  // (0, 1]
  // w = 1 + log(u + (1 - u) exp(-2 kappa)) / kappa, the inverse CDF of m.p.
  const double w = std::clamp(1.0 + std::log(u + (1.0 - u) * std::exp(-2.0 * kappa)) / kappa, -1.0, 1.0);
  const double angle = 2.0 * std::numbers::pi * unif(rng);
  const auto [e1, e2] = tangent_frame(mean);
  const double r = std::sqrt(std::max(0.0, 1.0 - w * w));
  return (w * mean + r * (std::cos(angle) * e1 + std::sin(angle) * e2)).normalized();
}

Directiond sample_vmf(const Directiond& mean, double kappa, std::uint64_t seed) {
  Rng rng(seed);
  return sample_vmf(mean, kappa, rng);
}

double vmf_density(const Directiond& mean, double kappa, const Directiond& p) {
  // kappa / (4 pi sinh kappa) e^{kappa t} written to avoid overflow.
  return kappa / (2.0 * std::numbers::pi * (1.0 - std::exp(-2.0 * kappa))) *
         std::exp(kappa * (mean.dot(p) - 1.0));
}

void GenerativeConfig::validate() const {
  if (mean_directions.empty()) throw ValidationError("generative config needs mean directions");
  if (mean_directions.size() != weights.size())
    throw ValidationError("generative config needs one weight per mean direction");
  for (const auto& m : mean_directions)
    if (!is_unit(m, 1e-9)) throw ValidationError("generative mean directions must be unit vectors");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ValidationError("generative weights must be non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw ValidationError("generative weights must not all be zero");
  if (!(component_kappa > 0.0) || !(mean_kappa > 0.0))
    throw ValidationError("VMF concentrations must be positive");
  if (quadrature_resolution < 8) throw ValidationError("quadrature resolution must be >= 8");
}

Simulator::Simulator(ShBasis basis, GenerativeConfig config)
    : basis_(std::move(basis)), config_(std::move(config)) {
  config_.validate();
  for (auto& m : config_.mean_directions) m.normalize();
  if (config_.response.size() == 0) config_.response = identity_response(basis_);
  require_response(basis_, config_.response);
  quadrature_ = equiangular_grid(config_.quadrature_resolution, config_.quadrature_resolution);
  weighted_basis_ = quadrature_.weights.asDiagonal() * basis_.evaluate(quadrature_.directions);
}

double Simulator::mixture_density(const std::vector<Directiond>& means, const Directiond& p) const {
  double f = 0.0;
  for (std::size_t k = 0; k < means.size(); ++k) {
    f += config_.weights[k] * (vmf_density(means[k], config_.component_kappa, p) +
                               vmf_density(-means[k], config_.component_kappa, p));
  }
  return f;
}

GroundTruth Simulator::from_means(const std::vector<Directiond>& means) const {
  if (means.size() != config_.weights.size())
    throw DomainError("one component mean per mixture weight required");
  Vectord samples(static_cast<Eigen::Index>(quadrature_.size()));
  for (std::size_t q = 0; q < quadrature_.size(); ++q)
    samples[static_cast<Eigen::Index>(q)] = mixture_density(means, quadrature_.directions[q]);

  GroundTruth out;
  out.fodf = weighted_basis_.transpose() * samples;
  // Unit mass: integral of the expansion is sqrt(4 pi) * c_0.
  out.fodf *= 1.0 / (std::sqrt(4.0 * std::numbers::pi) * out.fodf[0]);
  out.signal = inverse_frt(basis_, spherical_convolution(basis_, out.fodf, config_.response));
  out.component_means = means;

  std::vector<std::pair<double, Directiond>> weighted;
  for (std::size_t k = 0; k < means.size(); ++k)
    if (config_.weights[k] > 0.0) weighted.emplace_back(config_.weights[k], means[k]);
  for (const auto& [w, m] : weighted) {
    bool merged = false;
    for (auto& p : out.peak_directions) {
      if (axis_angle_deg(p, m) < config_.peak_merge_deg) {
        const Directiond aligned = p.dot(m) >= 0.0 ? m : Directiond(-m);
        p = (p + aligned).normalized();
        merged = true;
        break;
      }
    }
    if (!merged) out.peak_directions.push_back(m);
  }
  return out;
}

GroundTruth Simulator::generate_fodf(std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<Directiond> means;
  means.reserve(config_.mean_directions.size());
  for (const auto& nu : config_.mean_directions) means.push_back(sample_vmf(nu, config_.mean_kappa, rng));
  return from_means(means);
}

std::vector<GroundTruth> Simulator::generate_cohort(int n, std::uint64_t seed) const {
  if (n < 1) throw DomainError("cohort size must be >= 1");
  std::vector<GroundTruth> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(generate_fodf(mix_seed(seed, static_cast<std::uint64_t>(i))));
  return out;
}

std::vector<Observationd> observe(const ShBasis& basis, const GroundTruth& truth,
                                  const std::vector<Directiond>& design, const NoiseSpec& noise,
                                  std::uint64_t seed) {
  if (!(noise.sigma >= 0.0)) throw DomainError("noise sigma must be non-negative");
  basis.require_coefficients(truth.signal);
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::chi_squared_distribution<double> chi(static_cast<double>(std::max(1, noise.chi_dof)));
  const double k = static_cast<double>(std::max(1, noise.chi_dof));

  std::vector<Observationd> out;
  out.reserve(design.size());
  for (const auto& p : design) {
    double value = basis.evaluate(p).dot(truth.signal);
    if (noise.sigma > 0.0) {
      const double e = noise.model == NoiseModel::Gaussian ? gauss(rng) : (chi(rng) - k) / std::sqrt(2.0 * k);
      value += noise.sigma * e;
    }
    out.push_back({p, value});
  }
  return out;
}

void write_cohort_csv(const std::vector<Vectord>& coefficients, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  if (coefficients.empty()) return;
  const Eigen::Index J = coefficients.front().size();
  for (Eigen::Index j = 0; j < J; ++j) out << (j ? "," : "") << 'c' << j;
  out << '\n' << std::setprecision(17);
  for (const auto& c : coefficients) {
    if (c.size() != J) throw DomainError("cohort rows have inconsistent lengths");
    for (Eigen::Index j = 0; j < J; ++j) out << (j ? "," : "") << c[j];
    out << '\n';
  }
}

std::vector<Vectord> read_cohort_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open cohort " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("cohort file is empty");
  const auto J = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
  std::vector<Vectord> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ValidationError("cohort line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (static_cast<Eigen::Index>(values.size()) != J)
      throw ValidationError("cohort line " + std::to_string(lineno) + " has " +
                            std::to_string(values.size()) + " columns, expected " + std::to_string(J));
    rows.push_back(Eigen::Map<Vectord>(values.data(), J));
  }
  return rows;
}

}  // namespace qspace
