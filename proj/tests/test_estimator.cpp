#include "qspace/design.hpp"
#include "qspace/estimator.hpp"
#include "qspace/sim.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace qspace;
using qspace::testing::Gen;

namespace {

std::vector<Observationd> exact_observations(const ShBasis& basis, const Vectord& c,
                                             const std::vector<Directiond>& points) {
  std::vector<Observationd> obs;
  for (const auto& p : points) obs.push_back({p, basis.evaluate(p).dot(c)});
  return obs;
}

std::vector<Observationd> noisy_observations(const ShBasis& basis, const Vectord& c,
                                             const std::vector<Directiond>& points, double sigma, Gen& g) {
  std::normal_distribution<double> n(0.0, sigma);
  auto obs = exact_observations(basis, c, points);
  for (auto& o : obs) o.value += n(g);
  return obs;
}

std::vector<Directiond> esr_points(int n, std::uint64_t seed) {
  EsrOptions opts;
  opts.seed = seed;
  return esr_design(n, opts).directions;
}

}  // namespace

TEST(Shls, InterpolatesAtFullRankWithoutPenalty) {
  const ShBasis basis(8);
  Gen g(71);
  const auto points = esr_points(basis.dimension(), 5);
  for (int trial = 0; trial < 5; ++trial) {
    const Vectord c = qspace::testing::random_vector(g, basis.dimension());
    const auto fit = shls_fit(basis, exact_observations(basis, c, points), 0.0);
    EXPECT_LT((fit.coefficients - c).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Shls, HeavyPenaltyKeepsOnlyTheMean) {
  const ShBasis basis(4);
  Gen g(72);
  const auto points = esr_points(40, 6);
  const Vectord c = qspace::testing::random_vector(g, basis.dimension());
  const auto obs = exact_observations(basis, c, points);
  const auto fit = shls_fit(basis, obs, 1e12);
  EXPECT_LT(fit.coefficients.tail(basis.dimension() - 1).cwiseAbs().maxCoeff(), 1e-8);
  const double phi0 = 1.0 / std::sqrt(4 * std::numbers::pi);
  EXPECT_NEAR(fit.coefficients[0], observed_values(obs).mean() / phi0, 1e-8);
}

TEST(Shls, SingularWithoutPenaltyIsReported) {
  const ShBasis basis(4);
  Gen g(73);
  const auto obs = exact_observations(basis, Vectord::Ones(15), qspace::testing::random_directions(g, 10));
  EXPECT_THROW(shls_fit(basis, obs, 0.0), NumericalError);
  EXPECT_THROW(shls_fit(basis, obs, -1.0), DomainError);
  EXPECT_THROW(shls_fit(basis, {}, 0.1), InsufficientDataError);
  EXPECT_NO_THROW(shls_fit(basis, obs, 1e-7));
}

TEST(Gcv, SelectsGridMinimum) {
  const ShBasis basis(8);
  Gen g(74);
  const auto points = esr_points(90, 7);
  const auto grid = log_grid(1e-6, 1.0, 13);
  for (int trial = 0; trial < 10; ++trial) {
    const Vectord c = qspace::testing::random_vector(g, basis.dimension(), 0.05);
    const auto obs = noisy_observations(basis, c, points, 0.01, g);
    const auto r = gcv_select(basis, obs, grid);
    // Brute force: recompute each score from its definition.
    const Matrixd Phi = design_matrix(basis, obs);
    const Vectord s = observed_values(obs);
    double best = std::numeric_limits<double>::infinity();
    for (double lambda : grid) {
      Matrixd A = Phi.transpose() * Phi;
      A.diagonal() += lambda * laplace_beltrami_penalty(basis).diagonal();
      const Matrixd H = Phi * A.inverse() * Phi.transpose();
      const double rss = (s - H * s).squaredNorm();
      const double M = static_cast<double>(obs.size());
      best = std::min(best, M * rss / std::pow(M - H.trace(), 2));
    }
    EXPECT_NEAR(r.score, best, 1e-9 * best);
    EXPECT_EQ(r.score, *std::min_element(r.scores.begin(), r.scores.end()));
  }
}

TEST(Gcv, NoiselessDataPicksSmallestLambda) {
  const ShBasis basis(8);
  Gen g(75);
  const Vectord c = qspace::testing::random_vector(g, basis.dimension());
  const auto grid = default_lambda_grid();
  const auto r = gcv_select(basis, exact_observations(basis, c, esr_points(90, 8)), grid);
  EXPECT_EQ(r.lambda, grid.front());
}

TEST(Gcv, TiesGoToLargerLambda) {
  const ShBasis basis(4);
  Vectord c = Vectord::Zero(basis.dimension());
  c[0] = 1.0;
  // A constant signal is fit exactly at every lambda, so all scores tie.
  const auto grid = log_grid(1e-4, 1e-1, 4);
  const auto r = gcv_select(basis, exact_observations(basis, c, esr_points(30, 9)), grid);
  EXPECT_EQ(r.lambda, grid.back());
}

TEST(Gcv, DegenerateWhenEveryLambdaInterpolates) {
  const ShBasis basis(8);
  Gen g(76);
  // A single sample is matched exactly by the unpenalized constant term at any lambda.
  const auto obs = exact_observations(basis, Vectord::Ones(45), qspace::testing::random_directions(g, 1));
  EXPECT_THROW(gcv_select(basis, obs, {1e-3, 1.0, 10.0}), NumericalError);
}

TEST(Gcv, BeatsUnpenalizedFitOnNoisyDenseData) {
  const ShBasis basis(8);
  const Simulator sim(basis);
  const auto points = esr_points(90, 10);
  const auto grid = default_lambda_grid();
  Gen g(77);
  double ise_gcv = 0.0, ise_ls = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto truth = sim.generate_fodf(1000 + static_cast<std::uint64_t>(rep));
    const auto obs = noisy_observations(basis, truth.signal, points, 0.01, g);
    ise_gcv += (gcv_select(basis, obs, grid).fit.coefficients - truth.signal).squaredNorm();
    ise_ls += (shls_fit(basis, obs, 0.0).coefficients - truth.signal).squaredNorm();
  }
  EXPECT_LT(ise_gcv, ise_ls);
}

TEST(LogGrid, EndpointsAndValidation) {
  const auto g = default_lambda_grid();
  ASSERT_EQ(g.size(), 20u);
  EXPECT_NEAR(g.front(), 1e-7, 1e-20);
  EXPECT_NEAR(g.back(), 1e-1, 1e-14);
  EXPECT_THROW(log_grid(0.0, 1.0, 3), DomainError);
  EXPECT_THROW(log_grid(1.0, 0.5, 3), DomainError);
}

TEST(Cu, NoObservationsReturnsPriorMean) {
  const ShBasis basis(8);
  Gen g(78);
  const auto prior = qspace::testing::random_prior(g, basis, 6, 1e-4);
  const auto fit = cu_fit(basis, std::vector<Observationd>{}, prior);
  EXPECT_EQ(fit.coefficients, prior.mean);
  EXPECT_EQ(fit.posterior_scores, Vectord::Zero(6));
}

TEST(Cu, ScalarHandComputation) {
  const ShBasis basis(8);
  const Directiond p(0, 0, 1);
  const Vectord phi = basis.evaluate(p);
  Vectord w = Vectord::Zero(basis.dimension());
  w[1] = 1.0;  // orthogonal to phi at the pole (m != 0)
  const double alpha = 0.5 / phi.norm();
  VoxelPriord prior;
  prior.mean = Vectord::Zero(basis.dimension());
  prior.eigenvectors = (alpha * phi.normalized() + std::sqrt(1 - alpha * alpha) * w);
  prior.eigenvalues = Vectord::Constant(1, 2.0);
  prior.covariance = 2.0 * prior.eigenvectors * prior.eigenvectors.transpose();
  prior.noise_variance = 0.01;
  ASSERT_NEAR(phi.dot(prior.eigenvectors.col(0)), 0.5, 1e-14);
  const Vectord xi = cu_posterior_coeffs(basis, std::vector<Observationd>{{p, 1.0}}, prior);
  EXPECT_NEAR(xi[0], 1.0 / 0.51, 1e-12);
}

TEST(Cu, ShrinksMonotonicallyWithNoise) {
  const ShBasis basis(6);
  Gen g(79);
  for (int trial = 0; trial < 20; ++trial) {
    auto prior = qspace::testing::random_prior(g, basis, 5, 1e-4);
    const auto obs = noisy_observations(basis, qspace::testing::random_vector(g, basis.dimension()),
                                        qspace::testing::random_directions(g, 8), 0.05, g);
    double previous = std::numeric_limits<double>::infinity();
    for (double s2 : {1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e8}) {
      prior.noise_variance = s2;
      const double norm = cu_posterior_coeffs(basis, obs, prior).norm();
      ASSERT_LE(norm, previous + 1e-12);
      previous = norm;
    }
    EXPECT_LT(previous, 1e-5);
  }
}

TEST(Cu, LinearInResiduals) {
  const ShBasis basis(4);
  Gen g(80);
  for (int trial = 0; trial < 20; ++trial) {
    auto prior = qspace::testing::random_prior(g, basis, 4, 1e-3);
    prior.mean.setZero();
    const auto points = qspace::testing::random_directions(g, 7);
    auto obs = exact_observations(basis, qspace::testing::random_vector(g, basis.dimension()), points);
    const Vectord xi = cu_posterior_coeffs(basis, obs, prior);
    for (auto& o : obs) o.value *= 2.0;
    ASSERT_LT((cu_posterior_coeffs(basis, obs, prior) - 2.0 * xi).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, xi.norm()));
  }
}

TEST(Cu, RecoversNoiselessLowRankSignal) {
  const ShBasis basis(8);
  Gen g(81);
  for (int trial = 0; trial < 10; ++trial) {
    auto prior = qspace::testing::random_prior(g, basis, 5, 1e-12);
    const Vectord xi0 = qspace::testing::random_vector(g, 5);
    const Vectord truth = prior.mean + prior.eigenvectors * xi0;
    const auto fit = cu_fit(basis, exact_observations(basis, truth, esr_points(12, 11)), prior);
    EXPECT_LT((fit.coefficients - truth).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Cu, ObservationCovarianceMatchesJointModel) {
  const ShBasis basis(6);
  Gen g(82);
  const auto prior = qspace::testing::random_prior(g, basis, 6, 3e-3);
  const auto points = qspace::testing::random_directions(g, 9);
  const Matrixd Phi = basis.evaluate(points);
  Matrixd joint = Phi * (prior.eigenvectors * prior.eigenvalues.asDiagonal() * prior.eigenvectors.transpose()) *
                  Phi.transpose();
  joint.diagonal().array() += prior.noise_variance;
  const Matrixd gamma = observation_covariance(Matrixd(Phi * prior.eigenvectors), prior.eigenvalues, prior.noise_variance);
  EXPECT_LT((gamma - joint).cwiseAbs().maxCoeff(), 1e-12);
}

// Under draws from the prior model itself, the conditional mean should do at
// least as well as penalized least squares at any fixed lambda.
TEST(Cu, BestLinearPredictorUnderItsOwnPrior) {
  const ShBasis basis(4);
  Gen g(83);
  auto prior = qspace::testing::random_prior(g, basis, 5, 1e-4);
  const auto points = esr_points(10, 12);
  const Matrixd chol = prior.eigenvalues.cwiseSqrt().asDiagonal();
  double cu_err = 0.0;
  std::vector<double> shls_err(4, 0.0);
  const std::vector<double> lambdas{1e-6, 1e-4, 1e-2, 1.0};
  for (int i = 0; i < 500; ++i) {
    const Vectord truth = prior.mean + prior.eigenvectors * (chol * qspace::testing::random_vector(g, 5));
    const auto obs = noisy_observations(basis, truth, points, std::sqrt(prior.noise_variance), g);
    cu_err += (cu_fit(basis, obs, prior).coefficients - truth).squaredNorm();
    for (std::size_t k = 0; k < lambdas.size(); ++k)
      shls_err[k] += (shls_fit(basis, obs, lambdas[k]).coefficients - truth).squaredNorm();
  }
  for (double e : shls_err) EXPECT_LE(cu_err, e);
}

TEST(Cu, RejectsMismatchedPrior) {
  Gen g(84);
  const auto prior = qspace::testing::random_prior(g, ShBasis(4), 3, 1e-3);
  EXPECT_THROW(cu_fit(ShBasis(6), std::vector<Observationd>{}, prior), DomainError);
}
