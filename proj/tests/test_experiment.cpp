#include "qspace/experiment.hpp"
#include "qspace/prior_io.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qspace;
using nlohmann::json;

namespace {

SimConfig tiny_config() {
  SimConfig c;
  c.n_train = 40;
  c.n_test = 12;
  c.dense_size = 45;
  c.budgets = {5, 10};
  c.esr_iterations = 200;
  c.b0_voxels = 200;
  c.peaks.grid_size = 1000;
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("qspace_exp_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, DefaultsMatchProtocol) {
  const SimConfig c;
  EXPECT_EQ(c.n_train, 200);
  EXPECT_EQ(c.n_test, 100);
  EXPECT_EQ(c.dense_size, 90);
  EXPECT_EQ(c.noise.sigma, 0.01);
  EXPECT_EQ(c.budgets, (std::vector<int>{5, 10, 15, 20, 30, 45, 60, 90}));
  EXPECT_EQ(c.candidates, 321);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, JsonRoundTrip) {
  const json j = json::parse(R"({
    "seed": 9, "max_degree": 6, "n_train": 30, "budgets": [3, 7],
    "noise": {"sigma": 0.02, "model": "chi_squared", "chi_dof": 4},
    "rank_rule": {"kind": "fixed", "rank": 5},
    "gcv": {"min": 1e-5, "max": 1e-2, "count": 4},
    "field": {"dims": [2, 1, 1]}
  })");
  const SimConfig c = config_from_json(j);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.max_degree, 6);
  EXPECT_EQ(c.noise.model, NoiseModel::CenteredChiSquared);
  EXPECT_EQ(c.rank_rule, RankRule::fixed(5));
  EXPECT_EQ(c.lambda_grid.size(), 4u);
  const SimConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Config, RejectsInvalidInput) {
  EXPECT_THROW(config_from_json(json::parse(R"({"budget": [5]})")), ValidationError);
  EXPECT_THROW(config_from_json(json::parse(R"({"budgets": [10, 5]})")), ValidationError);
  EXPECT_THROW(config_from_json(json::parse(R"({"budgets": [5, 5]})")), ValidationError);
  EXPECT_THROW(config_from_json(json::parse(R"({"n_train": 1})")), ValidationError);
  EXPECT_THROW(config_from_json(json::parse(R"({"noise": {"sigma": -0.1}})")), ValidationError);
  EXPECT_THROW(config_from_json(json::parse(R"({"noise": {"model": "rician"}})")), ValidationError);
  EXPECT_THROW(config_from_json(json::parse(R"({"max_degree": 5})")), ValidationError);
  EXPECT_THROW(config_from_json(json::parse(R"({"candidates": 50})")), ValidationError);
  EXPECT_THROW(config_from_json(json::parse(R"({"n_train": "many"})")), ValidationError);
  EXPECT_THROW(config_from_json(json::parse(R"({"generative": {"weights": [1.0]}})")), ValidationError);
}

TEST(Threads, EnvironmentOverridesRequest) {
  ::unsetenv("QSPACE_THREADS");
  EXPECT_EQ(resolve_threads(3), 3);
  ::setenv("QSPACE_THREADS", "2", 1);
  EXPECT_EQ(resolve_threads(3), 2);
  ::setenv("QSPACE_THREADS", "zero", 1);
  EXPECT_THROW(resolve_threads(3), ValidationError);
  ::unsetenv("QSPACE_THREADS");
}

TEST(Threads, ParallelForCoversEveryIndex) {
  std::vector<int> hits(100, 0);
  parallel_for(100, 4, [&](int i) { hits[static_cast<std::size_t>(i)]++; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3, [](int i) { if (i == 7) throw DomainError("x"); }), DomainError);
}

TEST(Simulation, CsvSchemaIsStable) {
  const auto result = run_simulation(tiny_config());
  const std::string csv = metrics_csv(result);
  std::istringstream in(csv);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "budget,method,mise,pfp,ea,n_test,seed,peak_match_rate");
  int rows = 0;
  for (std::string line; std::getline(in, line); ++rows)
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 7) << line;
  EXPECT_EQ(rows, 4);
  EXPECT_EQ(result.rows[0].method, kMethodCu);
  EXPECT_EQ(result.rows[1].method, kMethodShls);
  for (const auto& r : result.rows) EXPECT_NEAR(r.pfp + r.peak_match_rate, 1.0, 1e-15);
}

TEST(Simulation, DeterministicAcrossRunsAndThreadCounts) {
  SimConfig c = tiny_config();
  const std::string a = metrics_csv(run_simulation(c));
  const std::string b = metrics_csv(run_simulation(c));
  c.threads = 3;
  const std::string t = metrics_csv(run_simulation(c));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, t);
  c.seed = 2;
  EXPECT_NE(a, metrics_csv(run_simulation(c)));
}

TEST(Simulation, GdsDesignsArePrefixes) {
  const SimConfig c = tiny_config();
  const auto result = run_simulation(c);
  const auto dir = scratch("prefix");
  write_experiment(result, c, dir);
  const auto d5 = read_gradient_table(dir / "designs" / "gds_5.txt");
  const auto d10 = read_gradient_table(dir / "designs" / "gds_10.txt");
  ASSERT_EQ(d5.size(), 5u);
  ASSERT_EQ(d10.size(), 10u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(d5[i], d10[i]);
  EXPECT_TRUE(std::filesystem::exists(dir / "summary.json"));
  EXPECT_EQ(slurp(dir / "metrics.csv"), metrics_csv(result));
  std::filesystem::remove_all(dir);
}

TEST(Simulation, DenseBudgetParity) {
  SimConfig c;
  c.budgets = {90};
  const auto result = run_simulation(c);
  const double cu = result.row(90, kMethodCu).mise;
  const double shls = result.row(90, kMethodShls).mise;
  EXPECT_LT(std::max(cu, shls) / std::min(cu, shls), 2.0);
}

TEST(Simulation, ValidatesBeforeWork) {
  SimConfig c = tiny_config();
  c.budgets = {10, 5};
  EXPECT_THROW(run_simulation(c), ValidationError);
}

TEST(GradientTable, NineSignificantDigits) {
  const std::vector<Directiond> dirs{Directiond(1, 0, 0), Directiond(1, 2, 3).normalized()};
  EXPECT_EQ(gradient_table(dirs), "1 0 0\n0.267261242 0.534522484 0.801783726\n");
}

TEST(Design, BudgetOneMatchesArgmax) {
  const ShBasis basis(4);
  PriorField field(basis, {1, 1, 1}, RankRule::fixed(1));
  field.set({0, 0, 0}, qspace::testing::basis_function_prior(basis, ShBasis::index(2, 0), 1.0, 1e-3));
  DesignRequest req;
  req.budget = 1;
  req.candidates = 50;
  const auto report = run_design(field, req);
  const auto cands = make_grid(GridKind::HemisphereSpiral, 50).directions;
  // Y_2^0 is largest in magnitude at the pole; the candidate closest to +z wins.
  std::size_t best = 0;
  for (std::size_t i = 0; i < cands.size(); ++i)
    if (cands[i].z() > cands[best].z()) best = i;
  ASSERT_EQ(report.selected.size(), 1u);
  EXPECT_EQ(report.selected[0], static_cast<int>(best));
  EXPECT_EQ(gradient_table(report.directions), gradient_table({cands[best]}));
}

TEST(Design, RegionWithOneVoxelEqualsSingle) {
  qspace::testing::Gen g(131);
  const ShBasis basis(8);
  PriorField field(basis, {1, 1, 1}, RankRule::variance(0.9));
  field.set({0, 0, 0}, qspace::testing::random_prior(g, basis, 6, 1e-3));
  DesignRequest req;
  req.budget = 12;
  const auto single = run_design(field, req);
  req.mode = DesignMode::Region;
  const auto region = run_design(field, req);
  EXPECT_EQ(single.to_json().dump(), region.to_json().dump());
  for (std::size_t m = 1; m < single.objective.size(); ++m) EXPECT_GE(single.objective[m], single.objective[m - 1]);
  EXPECT_GT(single.bound.bound_factor, 0.0);
  req.budget = 400;
  EXPECT_THROW(run_design(field, req), ValidationError);
}

TEST(PriorFieldBuild, InterpolatesBetweenTrainedVoxels) {
  SimConfig c = tiny_config();
  c.field_dims = {2, 1, 1};
  const PriorField field = build_prior_field(c);
  ASSERT_EQ(field.size(), 2u);
  const auto a = field.at({0, 0, 0});
  const auto mid = interpolate_prior(field, Eigen::Vector3d(0.5, 0, 0));
  EXPECT_EQ(mid.noise_variance, a.noise_variance);
  EXPECT_EQ(interpolate_prior(field, Eigen::Vector3d(0, 0, 0)).covariance, a.covariance);
  const PriorField back = decode_prior_field(encode_prior_field(field));
  EXPECT_EQ(back.at({1, 0, 0}).covariance, field.at({1, 0, 0}).covariance);
}
