#include "qspace/estimator.hpp"

#include <limits>

namespace qspace {

FitResultd shls_fit(const ShBasis& basis, const std::vector<Observationd>& obs, double lambda) {
  if (obs.empty()) throw InsufficientDataError("shls_fit needs at least one observation");
  if (!(lambda >= 0.0)) throw DomainError("lambda must be non-negative");
  const Matrixd Phi = design_matrix(basis, obs);
  const Vectord s = observed_values(obs);

  FitResultd out;
  out.lambda = lambda;
  if (lambda == 0.0) {
    if (Phi.rows() < Phi.cols())
      throw NumericalError("singular fit: fewer observations than basis functions at lambda = 0");
    Eigen::ColPivHouseholderQR<Matrixd> qr(Phi);
    if (qr.rank() < Phi.cols()) throw NumericalError("singular fit: design matrix is rank deficient");
    out.coefficients = qr.solve(s);
    return out;
  }
  Matrixd A = Phi.transpose() * Phi;
  A.diagonal() += lambda * laplace_beltrami_penalty(basis).diagonal();
  Eigen::LLT<Matrixd> llt(A);
  if (llt.info() != Eigen::Success) throw NumericalError("singular fit: normal equations not SPD");
  out.coefficients = llt.solve(Phi.transpose() * s);
  return out;
}

GcvResult gcv_select(const ShBasis& basis, const std::vector<Observationd>& obs,
                     const std::vector<double>& lambda_grid) {
  if (lambda_grid.empty()) throw DomainError("lambda grid is empty");
  if (obs.empty()) throw InsufficientDataError("gcv_select needs observations");
  const Matrixd Phi = design_matrix(basis, obs);
  const Vectord s = observed_values(obs);
  const Matrixd gram = Phi.transpose() * Phi;
  const Vectord rhs = Phi.transpose() * s;
  const Vectord penalty = laplace_beltrami_penalty(basis).diagonal();
  const double M = static_cast<double>(obs.size());
  // RSS at rounding level is treated as an exact fit when comparing scores.
  const double tie_floor = 1e-24 * s.squaredNorm() / M;

  GcvResult out;
  out.scores.assign(lambda_grid.size(), std::numeric_limits<double>::infinity());
  bool found = false;
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    const double lambda = lambda_grid[i];
    if (!(lambda > 0.0)) throw DomainError("GCV grid values must be positive");
    Matrixd A = gram;
    A.diagonal() += lambda * penalty;
    Eigen::LLT<Matrixd> llt(A);
    if (llt.info() != Eigen::Success) continue;
    const Vectord c = llt.solve(rhs);
    const double rss = (s - Phi * c).squaredNorm();
    const double trace_h = llt.solve(gram).trace();
    const double dof = M - trace_h;
    if (dof <= 1e-10 * M) continue;
    const double score = M * rss / (dof * dof);
    out.scores[i] = score;

    const double tol = 1e-12 * std::max(score, out.score) + tie_floor;
    const bool better = !found || score < out.score - tol;
    const bool tie = found && std::abs(score - out.score) <= tol && lambda > out.lambda;
    if (better || tie) {
      found = true;
      out.lambda = lambda;
      out.score = score;
      out.fit.coefficients = c;
      out.fit.lambda = lambda;
    }
  }
  if (!found) throw NumericalError("degenerate GCV: trace of the hat matrix reaches M for every lambda");
  return out;
}

std::vector<double> log_grid(double lo, double hi, int count) {
  if (count < 1 || !(lo > 0.0) || !(hi >= lo)) throw DomainError("invalid log grid");
  std::vector<double> out(static_cast<std::size_t>(count));
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / (count - 1));
  return out;
}

std::vector<double> default_lambda_grid() { return log_grid(1e-7, 1e-1, 20); }

}  // namespace qspace
