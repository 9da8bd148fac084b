#include "qspace/metrics.hpp"
#include "qspace/sim.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace qspace;

namespace {

PeakSet peaks_at(std::initializer_list<Directiond> dirs) {
  PeakSet s;
  double v = 1.0;
  for (const auto& d : dirs) s.peaks.push_back({d.normalized(), v -= 0.1});
  return s;
}

PeakSet with_count(std::size_t n) {
  PeakSet s;
  for (std::size_t i = 0; i < n; ++i) s.peaks.push_back({Directiond::UnitZ(), 1.0});
  return s;
}

Directiond at_angle_from_z(double deg) {
  const double a = deg * std::numbers::pi / 180.0;
  return Directiond(std::sin(a), 0, std::cos(a));
}

}  // namespace

TEST(Ise, ZeroAndParseval) {
  qspace::testing::Gen g(121);
  const Vectord f = qspace::testing::random_vector(g, 15);
  EXPECT_EQ(ise(f, f), 0.0);
  Vectord h = f;
  h[3] += 2.0;
  EXPECT_NEAR(ise(f, h), 4.0, 1e-15);
  EXPECT_THROW(ise(f, Vectord(Vectord::Zero(6))), DomainError);
}

TEST(Ise, MatchesQuadrature) {
  const ShBasis basis(8);
  const auto grid = make_grid(GridKind::Equiangular, 64);
  const Matrixd phi = basis.evaluate(grid.directions);
  qspace::testing::Gen g(122);
  for (int t = 0; t < 5; ++t) {
    const Vectord f = qspace::testing::random_vector(g, 45), h = qspace::testing::random_vector(g, 45);
    const Vectord diff = phi * (f - h);
    EXPECT_NEAR(ise(f, h), grid.integrate(diff.cwiseAbs2()), 1e-6);
  }
}

TEST(Peaks, ZonalSingleFiber) {
  const ShBasis basis(8);
  const Simulator sim(basis);
  const auto truth = sim.from_means({Directiond::UnitZ(), Directiond::UnitZ()});
  const auto peaks = PeakFinder(basis).find(truth.fodf);
  ASSERT_EQ(peaks.count(), 1u);
  EXPECT_LT(axis_angle_deg(peaks.peaks[0].direction, Directiond(Directiond::UnitZ())), 1.0);
  EXPECT_GE(peaks.peaks[0].direction.z(), 0.0);
}

TEST(Peaks, PerpendicularMixture) {
  const ShBasis basis(8);
  const Simulator sim(basis);
  const auto truth = sim.from_means({Directiond::UnitX(), Directiond::UnitZ()});
  const auto peaks = PeakFinder(basis).find(truth.fodf);
  ASSERT_EQ(peaks.count(), 2u);
  EXPECT_NEAR(crossing_angle_deg(peaks), 90.0, 3.0);
}

TEST(Peaks, ConstantHasNoPeaks) {
  const ShBasis basis(8);
  Vectord c = Vectord::Zero(45);
  c[0] = 1.0;
  EXPECT_EQ(find_peaks(basis, c, make_grid(GridKind::Spiral, 2000)).count(), 0u);
  EXPECT_EQ(find_peaks(basis, Vectord(-c), make_grid(GridKind::Spiral, 2000)).count(), 0u);
}

TEST(Peaks, RefinementImprovesOnGridMaximum) {
  const ShBasis basis(8);
  const Simulator sim(basis);
  const Directiond m = Directiond(0.2, 0.3, 0.9).normalized();
  const auto truth = sim.from_means({m, m});
  PeakOptions coarse;
  coarse.grid_size = 500;
  const auto refined = PeakFinder(basis, coarse).find(truth.fodf);
  coarse.refine_steps = 0;
  const auto raw = PeakFinder(basis, coarse).find(truth.fodf);
  ASSERT_EQ(refined.count(), 1u);
  ASSERT_EQ(raw.count(), 1u);
  EXPECT_GE(refined.peaks[0].value, raw.peaks[0].value);
  EXPECT_LE(axis_angle_deg(refined.peaks[0].direction, m), axis_angle_deg(raw.peaks[0].direction, m) + 1e-12);
}

TEST(Pfp, CountsMismatches) {
  const std::vector<PeakSet> truth{with_count(1), with_count(2), with_count(2), with_count(1)};
  EXPECT_EQ(pfp(truth, truth), 0.0);
  EXPECT_EQ(peak_match_rate(truth, truth), 1.0);
  const std::vector<PeakSet> wrong{with_count(2), with_count(1), with_count(0), with_count(3)};
  EXPECT_EQ(pfp(wrong, truth), 1.0);
  const std::vector<PeakSet> half{with_count(1), with_count(1), with_count(2), with_count(2)};
  EXPECT_EQ(pfp(half, truth), 0.5);
  EXPECT_THROW(pfp(half, std::vector<PeakSet>{}), DomainError);
}

TEST(AngularErrorTest, Examples) {
  const auto single = peaks_at({Directiond::UnitZ()});
  EXPECT_EQ(angular_error(single, single).degrees, 0.0);

  const auto truth90 = peaks_at({Directiond::UnitZ(), at_angle_from_z(90)});
  const auto est80 = peaks_at({Directiond::UnitZ(), at_angle_from_z(80)});
  EXPECT_NEAR(angular_error(est80, truth90).degrees, 10.0, 1e-10);

  const auto est60 = peaks_at({Directiond::UnitZ(), at_angle_from_z(60)});
  EXPECT_NEAR(angular_error(est60, single).degrees, 60.0, 1e-10);

  const auto none = angular_error(PeakSet{}, truth90);
  EXPECT_TRUE(none.estimate_empty);
  EXPECT_NEAR(none.degrees, 90.0, 1e-10);
  EXPECT_THROW(angular_error(single, PeakSet{}), DomainError);
}

TEST(AngularErrorTest, UsesTopTwoPeaks) {
  const auto est = peaks_at({Directiond::UnitZ(), at_angle_from_z(70), at_angle_from_z(20)});
  EXPECT_NEAR(crossing_angle_deg(est), 70.0, 1e-10);
}
