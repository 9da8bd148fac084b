#include "qspace/design.hpp"

#include <random>

namespace qspace {

double antipodal_energy(const std::vector<Directiond>& points) {
  double energy = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      energy += 1.0 / (points[i] - points[j]).norm() + 1.0 / (points[i] + points[j]).norm();
    }
  }
  return energy;
}

namespace {

std::vector<Directiond> energy_gradient(const std::vector<Directiond>& points) {
  std::vector<Directiond> grad(points.size(), Directiond::Zero());
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const Directiond d = points[i] - points[j];
      const Directiond s = points[i] + points[j];
      const Directiond gd = -d / std::pow(d.norm(), 3);
      const Directiond gs = -s / std::pow(s.norm(), 3);
      grad[i] += gd + gs;
      grad[j] += -gd + gs;
    }
  }
  // Project onto tangent planes.
  for (std::size_t i = 0; i < points.size(); ++i) grad[i] -= grad[i].dot(points[i]) * points[i];
  return grad;
}

}  // namespace

EsrResult esr_design(int n, const EsrOptions& options) {
  if (n < 2) throw DomainError("ESR needs at least 2 directions");
  if (options.iterations < 0) throw DomainError("ESR iterations must be non-negative");

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> jitter(0.0, 1e-3);
  std::vector<Directiond> points = make_grid(GridKind::HemisphereSpiral, n).directions;
  for (auto& p : points) {
    p += Directiond(jitter(rng), jitter(rng), jitter(rng));
    p.normalize();
  }

  EsrResult out;
  double energy = antipodal_energy(points);
  out.initial_energy = energy;
  double step = options.initial_step > 0.0 ? options.initial_step : 0.01 / n;
  std::vector<Directiond> trial(points.size());
  int it = 0;
  for (; it < options.iterations; ++it) {
    const auto grad = energy_gradient(points);
    bool accepted = false;
    for (int attempt = 0; attempt < 50; ++attempt) {
      for (std::size_t i = 0; i < points.size(); ++i) trial[i] = (points[i] - step * grad[i]).normalized();
      const double e = antipodal_energy(trial);
      if (e < energy) {
        points.swap(trial);
        energy = e;
        step *= 1.2;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  out.iterations_run = it;
  out.final_energy = energy;
  out.directions = std::move(points);
  return out;
}

double min_antipodal_angle_deg(const std::vector<Directiond>& points) {
  double best = 90.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      best = std::min(best, axis_angle_deg(points[i], points[j]));
  return best;
}

}  // namespace qspace
