#include "qspace/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

namespace qspace {

namespace {

using nlohmann::json;

// Seed streams; every random quantity in a run derives from config.seed.
enum Stream : std::uint64_t {
  kDenseEsr = 1,
  kTrainCohort = 2,
  kTestCohort = 3,
  kTrainNoise = 4,
  kTestNoise = 5,
  kB0Noise = 6,
  kBudgetEsr = 1000,
  kFieldVoxel = 10000,
};

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::vector<Directiond> pick(const std::vector<Directiond>& points, const std::vector<int>& idx,
                             std::size_t count) {
  std::vector<Directiond> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(points[static_cast<std::size_t>(idx[i])]);
  return out;
}

// Below M = J an unpenalized fit is singular, so tiny lambdas are lifted to a floor.
constexpr double kSparseLambdaFloor = 1e-7;

std::vector<double> shls_lambda_grid(const std::vector<double>& grid, std::size_t m, int dimension) {
  if (m >= static_cast<std::size_t>(dimension)) return grid;
  std::vector<double> out;
  for (double l : grid) out.push_back(std::max(l, kSparseLambdaFloor));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Directiond rotate_z(const Directiond& p, double deg) {
  const double a = deg * std::numbers::pi / 180.0;
  return Directiond(std::cos(a) * p.x() - std::sin(a) * p.y(), std::sin(a) * p.x() + std::cos(a) * p.y(),
                    p.z());
}

}  // namespace

const MetricRow& ExperimentResult::row(int budget, const std::string& method) const {
  for (const auto& r : rows)
    if (r.budget == budget && r.method == method) return r;
  throw DomainError("no metric row for budget " + std::to_string(budget) + " / " + method);
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

int resolve_threads(int requested) {
  if (const char* env = std::getenv("QSPACE_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw ValidationError(std::string("QSPACE_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max(1, requested);
}

double prior_noise_variance(const SimConfig& config, std::uint64_t seed) {
  const double floor = 1e-12;
  if (!config.estimate_noise) return std::max(floor, config.noise.sigma * config.noise.sigma);
  Rng rng(mix_seed(seed, kB0Noise));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::chi_squared_distribution<double> chi(config.noise.chi_dof);
  const double k = config.noise.chi_dof;
  std::vector<Vectord> repeats;
  for (int r = 0; r < config.b0_repeats; ++r) {
    Vectord v(config.b0_voxels);
    for (int i = 0; i < config.b0_voxels; ++i) {
      const double e = config.noise.model == NoiseModel::Gaussian ? gauss(rng) : (chi(rng) - k) / std::sqrt(2.0 * k);
      v[i] = 1.0 + config.noise.sigma * e;
    }
    repeats.push_back(std::move(v));
  }
  return std::max(floor, estimate_noise_variance(repeats));
}

TrainedPrior train_prior(const SimConfig& config, const Simulator& simulator, std::uint64_t seed) {
  const ShBasis& basis = simulator.basis();
  TrainedPrior out;
  EsrOptions esr;
  esr.iterations = config.esr_iterations;
  esr.seed = mix_seed(seed, kDenseEsr);
  out.dense_design = esr_design(config.dense_size, esr).directions;

  const auto cohort = simulator.generate_cohort(config.n_train, mix_seed(seed, kTrainCohort));
  out.fits.resize(cohort.size());
  const std::uint64_t noise_seed = mix_seed(seed, kTrainNoise);
  parallel_for(static_cast<int>(cohort.size()), resolve_threads(config.threads), [&](int i) {
    const auto obs = observe(basis, cohort[static_cast<std::size_t>(i)], out.dense_design, config.noise,
                             mix_seed(noise_seed, static_cast<std::uint64_t>(i)));
    out.fits[static_cast<std::size_t>(i)] = gcv_select(basis, obs, config.lambda_grid).fit.coefficients;
  });
  auto moments = empirical_moments(out.fits);
  out.prior = make_prior(std::move(moments.mean), std::move(moments.covariance), config.rank_rule,
                         prior_noise_variance(config, seed));
  return out;
}

ExperimentResult run_simulation(const SimConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const ShBasis basis(config.max_degree);
  const Simulator simulator(basis, config.generative);
  const int threads = resolve_threads(config.threads);
  const std::uint64_t seed = config.seed;

  ExperimentResult result;
  const TrainedPrior trained = train_prior(config, simulator, seed);
  const VoxelPriord& prior = trained.prior;
  result.dense_design = trained.dense_design;
  result.noise_variance = prior.noise_variance;
  result.prior_rank = prior.rank();

  const auto candidates = make_candidates(make_grid(GridKind::HemisphereSpiral, config.candidates).directions);
  result.candidates = candidates.points;
  const int max_budget = config.budgets.back();
  const auto gds = gds_select(basis, candidates, prior, max_budget);
  result.gds_selected = gds.selected;
  result.gds_objective = gds.objective_history;

  for (int b : config.budgets) {
    EsrOptions esr;
    esr.iterations = config.esr_iterations;
    esr.seed = mix_seed(seed, kBudgetEsr + static_cast<std::uint64_t>(b));
    result.esr_designs.push_back(esr_design(b, esr).directions);
  }

  const auto tests = simulator.generate_cohort(config.n_test, mix_seed(seed, kTestCohort));
  const PeakFinder finder(basis, config.peaks);
  const Vectord& response = simulator.config().response;

  const std::size_t nb = config.budgets.size();
  const auto nt = static_cast<std::size_t>(config.n_test);
  // Indexed [budget][method][subject]; filled in parallel, reduced serially.
  struct Cell {
    double ise = 0.0;
    PeakSet peaks;
    bool gcv_fallback = false;
  };
  std::vector<std::vector<std::vector<Cell>>> cells(nb, std::vector<std::vector<Cell>>(2, std::vector<Cell>(nt)));
  std::vector<PeakSet> truth_peaks(nt);
  const std::uint64_t test_noise = mix_seed(seed, kTestNoise);

  parallel_for(config.n_test, threads, [&](int t) {
    const auto& truth = tests[static_cast<std::size_t>(t)];
    truth_peaks[static_cast<std::size_t>(t)] = finder.find(truth.fodf);
    const std::uint64_t subject_seed = mix_seed(test_noise, static_cast<std::uint64_t>(t));
    for (std::size_t bi = 0; bi < nb; ++bi) {
      const int b = config.budgets[bi];
      const auto gds_design = pick(candidates.points, gds.selected, static_cast<std::size_t>(b));
      const auto cu_obs = observe(basis, truth, gds_design, config.noise,
                                  mix_seed(subject_seed, 2 * static_cast<std::uint64_t>(b)));
      const auto shls_obs = observe(basis, truth, result.esr_designs[bi], config.noise,
                                    mix_seed(subject_seed, 2 * static_cast<std::uint64_t>(b) + 1));

      Cell& cu = cells[bi][0][static_cast<std::size_t>(t)];
      const Vectord cu_coeffs = cu_fit(basis, cu_obs, prior).coefficients;
      cu.ise = ise(cu_coeffs, truth.signal);
      cu.peaks = finder.find(sharpening_deconvolution(basis, funk_radon_transform(basis, cu_coeffs), response));

      Cell& sh = cells[bi][1][static_cast<std::size_t>(t)];
      Vectord sh_coeffs;
      const auto grid = shls_lambda_grid(config.lambda_grid, shls_obs.size(), basis.dimension());
      try {
        sh_coeffs = gcv_select(basis, shls_obs, grid).fit.coefficients;
      } catch (const NumericalError&) {
        const double lambda = grid.back();
        sh_coeffs = shls_fit(basis, shls_obs, lambda).coefficients;
        sh.gcv_fallback = true;
      }
      sh.ise = ise(sh_coeffs, truth.signal);
      sh.peaks = finder.find(sharpening_deconvolution(basis, funk_radon_transform(basis, sh_coeffs), response));
    }
  });

  const char* methods[2] = {kMethodCu, kMethodShls};
  for (std::size_t bi = 0; bi < nb; ++bi) {
    for (int m = 0; m < 2; ++m) {
      const auto& col = cells[bi][static_cast<std::size_t>(m)];
      MetricRow row;
      row.budget = config.budgets[bi];
      row.method = methods[m];
      row.n_test = config.n_test;
      row.seed = seed;
      std::vector<PeakSet> estimates;
      double ise_sum = 0.0, ea_sum = 0.0;
      for (std::size_t t = 0; t < nt; ++t) {
        ise_sum += col[t].ise;
        estimates.push_back(col[t].peaks);
        if (truth_peaks[t].count() > 0) {
          const auto ae = angular_error(col[t].peaks, truth_peaks[t]);
          ea_sum += ae.degrees;
          row.empty_estimates += ae.estimate_empty ? 1 : 0;
        }
        row.gcv_fallbacks += col[t].gcv_fallback ? 1 : 0;
      }
      row.mise = ise_sum / static_cast<double>(nt);
      row.ea = ea_sum / static_cast<double>(nt);
      row.peak_match_rate = peak_match_rate(estimates, truth_peaks);
      row.pfp = 1.0 - row.peak_match_rate;
      result.rows.push_back(std::move(row));
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::string metrics_csv(const ExperimentResult& result) {
  std::ostringstream out;
  out << "budget,method,mise,pfp,ea,n_test,seed,peak_match_rate\n";
  for (const auto& r : result.rows) {
    out << r.budget << ',' << r.method << ',' << format_double(r.mise) << ',' << format_double(r.pfp) << ','
        << format_double(r.ea) << ',' << r.n_test << ',' << r.seed << ',' << format_double(r.peak_match_rate)
        << '\n';
  }
  return out.str();
}

std::string gradient_table(const std::vector<Directiond>& directions) {
  std::string out;
  char buf[96];
  for (const auto& p : directions) {
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", p.x(), p.y(), p.z());
    out += buf;
  }
  return out;
}

void write_gradient_table(const std::vector<Directiond>& directions, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << gradient_table(directions);
}

std::vector<Directiond> read_gradient_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open gradient table " + path.string());
  std::vector<Directiond> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    double x, y, z;
    if (!(ss >> x >> y >> z)) throw ValidationError("malformed gradient line: '" + line + "'");
    out.emplace_back(x, y, z);
  }
  return out;
}

void write_experiment(const ExperimentResult& result, const SimConfig& config,
                      const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "designs");
  {
    std::ofstream out(dir / "metrics.csv");
    if (!out) throw ValidationError("cannot write into " + dir.string());
    out << metrics_csv(result);
  }
  write_gradient_table(result.dense_design, dir / "designs" / "dense_esr.txt");
  for (std::size_t bi = 0; bi < config.budgets.size(); ++bi) {
    const int b = config.budgets[bi];
    write_gradient_table(pick(result.candidates, result.gds_selected, static_cast<std::size_t>(b)),
                         dir / "designs" / ("gds_" + std::to_string(b) + ".txt"));
    write_gradient_table(result.esr_designs[bi], dir / "designs" / ("esr_" + std::to_string(b) + ".txt"));
  }
  json summary = {
      {"config", config_to_json(config)},
      {"prior_rank", result.prior_rank},
      {"noise_variance", result.noise_variance},
      {"gds_objective", result.gds_objective},
      {"seconds", result.seconds},
  };
  json rows = json::array();
  for (const auto& r : result.rows)
    rows.push_back({{"budget", r.budget},
                    {"method", r.method},
                    {"empty_estimates", r.empty_estimates},
                    {"gcv_fallbacks", r.gcv_fallbacks}});
  summary["diagnostics"] = rows;
  std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
}

PriorField build_prior_field(const SimConfig& config) {
  config.validate();
  const ShBasis basis(config.max_degree);
  PriorField field(basis, config.field_dims, config.rank_rule);
  const double noise = prior_noise_variance(config, config.seed);
  const auto& d = config.field_dims;
  for (int x = 0; x < d[0]; ++x) {
    for (int y = 0; y < d[1]; ++y) {
      for (int z = 0; z < d[2]; ++z) {
        GenerativeConfig gen = config.generative;
        for (auto& m : gen.mean_directions) m = rotate_z(m.normalized(), config.field_rotation_deg * (x + y + z));
        const Simulator sim(basis, gen);
        const auto linear = static_cast<std::uint64_t>((x * d[1] + y) * d[2] + z);
        SimConfig voxel_config = config;
        voxel_config.estimate_noise = false;
        auto trained = train_prior(voxel_config, sim, mix_seed(config.seed, kFieldVoxel + linear));
        trained.prior.noise_variance = noise;
        field.set({x, y, z}, std::move(trained.prior));
      }
    }
  }
  return field;
}

PriorField prior_field_from_cohort(const std::vector<Vectord>& fits, const RankRule& rule,
                                   double noise_variance) {
  if (fits.empty()) throw InsufficientDataError("cohort is empty");
  const auto J = static_cast<int>(fits.front().size());
  int L = 0;
  while (ShBasis::dimension_for(L) < J) L += 2;
  if (ShBasis::dimension_for(L) != J)
    throw ValidationError("cohort width " + std::to_string(J) + " is not an even-degree SH dimension");
  PriorField field(ShBasis(L), {1, 1, 1}, rule);
  auto moments = empirical_moments(fits);
  field.set({0, 0, 0}, make_prior(std::move(moments.mean), std::move(moments.covariance), rule, noise_variance));
  return field;
}

json DesignReport::to_json() const {
  json dirs = json::array();
  for (const auto& p : directions) dirs.push_back({p.x(), p.y(), p.z()});
  return {
      {"selected", selected},
      {"directions", dirs},
      {"objective", objective},
      {"bound",
       {{"m", bound.m},
        {"M", bound.M},
        {"rho_1", bound.rho_1},
        {"rho_K", bound.rho_K},
        {"lambda_psi_star", bound.lambda_psi_star},
        {"noise_variance", bound.noise_variance},
        {"bound_factor", bound.bound_factor}}},
  };
}

DesignReport run_design(const PriorField& field, const DesignRequest& request) {
  if (field.size() == 0) throw ValidationError("prior field has no voxels");
  const ShBasis& basis = field.basis();
  const auto candidates = make_candidates(make_grid(GridKind::HemisphereSpiral, request.candidates).directions);
  if (request.budget < 1) throw ValidationError("budget must be >= 1");
  if (static_cast<std::size_t>(request.budget) > candidates.size())
    throw ValidationError("budget " + std::to_string(request.budget) + " exceeds " +
                          std::to_string(candidates.size()) + " candidates");

  DesignReport report;
  if (request.mode == DesignMode::Single) {
    const VoxelPriord prior =
        request.query ? interpolate_prior(field, *request.query) : field.voxels().begin()->second;
    const auto design = gds_select(basis, candidates, prior, request.budget);
    report.selected = design.selected;
    report.objective = design.objective_history;
    report.bound = greedy_bound(basis, prior, candidates, request.budget, request.budget);
  } else {
    std::vector<VoxelPriord> priors;
    for (const auto& [idx, prior] : field.voxels()) priors.push_back(prior);
    const std::vector<double> weights(priors.size(), 1.0 / static_cast<double>(priors.size()));
    const auto design = gds_select_region(basis, candidates, priors, weights, request.budget);
    report.selected = design.selected;
    report.objective = design.objective_history;
    report.bound = greedy_bound(basis, priors.front(), candidates, request.budget, request.budget);
  }
  for (int i : report.selected) report.directions.push_back(candidates.points[static_cast<std::size_t>(i)]);
  return report;
}

}  // namespace qspace
