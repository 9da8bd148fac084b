#include "qspace/experiment.hpp"
#include "qspace/prior_io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

using namespace qspace;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
};

SimConfig resolve_config(const Common& c) {
  SimConfig config = c.config.empty() ? SimConfig{} : load_config(c.config);
  if (c.seed) config.seed = *c.seed;
  if (c.threads) config.threads = *c.threads;
  if (!c.out.empty()) config.output_dir = c.out;
  config.threads = resolve_threads(config.threads);
  config.validate();
  return config;
}

void add_common(CLI::App* app, Common& c, bool with_config = true) {
  if (with_config) app->add_option("--config", c.config, "JSON configuration file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Master seed");
  app->add_option("--out", c.out, "Output path");
  app->add_option("--threads", c.threads, "Worker threads (QSPACE_THREADS overrides)")->check(CLI::PositiveNumber);
}

Eigen::Vector3d parse_point(const std::vector<double>& v) { return Eigen::Vector3d(v[0], v[1], v[2]); }

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

int cmd_simulate(const Common& c) {
  const SimConfig config = resolve_config(c);
  const auto result = run_simulation(config);
  write_experiment(result, config, config.output_dir);
  std::cout << metrics_csv(result);
  std::fprintf(stderr, "prior rank %d, sigma^2 %.6g, %.1f s -> %s\n", result.prior_rank, result.noise_variance,
               result.seconds, config.output_dir.string().c_str());
  return 0;
}

int cmd_prior_build(const Common& c, const std::string& cohort, double noise_variance) {
  SimConfig config = resolve_config(c);
  const std::filesystem::path out = c.out.empty() ? std::filesystem::path("prior.qsp") : std::filesystem::path(c.out);
  PriorField field = [&] {
    if (cohort.empty()) return build_prior_field(config);
    const double sigma2 = noise_variance > 0.0 ? noise_variance : prior_noise_variance(config, config.seed);
    return prior_field_from_cohort(read_cohort_csv(cohort), config.rank_rule, sigma2);
  }();
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  save_prior_field(field, out);
  std::cout << prior_field_sidecar(field).dump(2) << '\n';
  return 0;
}

int cmd_prior_interp(const std::string& prior_path, const std::vector<double>& at, const std::string& out) {
  const PriorField field = load_prior_field(prior_path);
  PriorField single(field.basis(), {1, 1, 1}, field.rank_rule());
  single.set({0, 0, 0}, interpolate_prior(field, parse_point(at)));
  const std::filesystem::path path = out.empty() ? std::filesystem::path("interp.qsp") : std::filesystem::path(out);
  save_prior_field(single, path);
  std::cout << prior_field_sidecar(single).dump(2) << '\n';
  return 0;
}

int cmd_design(const std::string& prior_path, DesignRequest request, const std::string& mode,
               const std::vector<double>& at, const std::string& out) {
  const PriorField field = load_prior_field(prior_path);
  request.mode = mode == "region" ? DesignMode::Region : DesignMode::Single;
  if (!at.empty()) request.query = parse_point(at);
  const DesignReport report = run_design(field, request);
  const std::filesystem::path dir = out.empty() ? std::filesystem::path(".") : std::filesystem::path(out);
  std::filesystem::create_directories(dir);
  write_gradient_table(report.directions, dir / "design.txt");
  write_json(report.to_json(), dir / "design.json");
  std::cout << gradient_table(report.directions);
  return 0;
}

int cmd_esr(int n, const Common& c, int iterations) {
  EsrOptions options;
  options.seed = c.seed.value_or(1);
  options.iterations = iterations;
  const EsrResult result = esr_design(n, options);
  if (c.out.empty()) {
    std::cout << gradient_table(result.directions);
  } else {
    write_gradient_table(result.directions, c.out);
  }
  std::fprintf(stderr, "energy %.12g (initial %.12g, %d iterations)\n", result.final_energy,
               result.initial_energy, result.iterations_run);
  std::printf("%.12g\n", result.final_energy);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prior-driven q-space sampling design and reconstruction"};
  app.require_subcommand(1);

  Common sim_opts;
  auto* simulate = app.add_subcommand("simulate", "Run the CU-GDS vs SHLS-ESR simulation study");
  add_common(simulate, sim_opts);

  Common build_opts;
  std::string cohort;
  double cohort_noise = 0.0;
  auto* prior_build = app.add_subcommand("prior-build", "Train a prior field and write it to --out");
  add_common(prior_build, build_opts);
  prior_build->add_option("--cohort", cohort, "Coefficient CSV (one subject per row) instead of simulation")
      ->check(CLI::ExistingFile);
  prior_build->add_option("--noise-variance", cohort_noise, "sigma^2 for --cohort priors");

  std::string interp_prior, interp_out;
  std::vector<double> interp_at;
  auto* prior_interp = app.add_subcommand("prior-interp", "Interpolate a prior field at a voxel coordinate");
  prior_interp->add_option("--prior", interp_prior, "Prior field file")->required()->check(CLI::ExistingFile);
  prior_interp->add_option("--at", interp_at, "Voxel coordinate x y z")->required()->expected(3);
  prior_interp->add_option("--out", interp_out, "Output prior file");

  std::string design_prior, design_mode = "single", design_out;
  std::vector<double> design_at;
  DesignRequest request;
  auto* design = app.add_subcommand("design", "Greedy design selection from a prior field");
  design->add_option("--prior", design_prior, "Prior field file")->required()->check(CLI::ExistingFile);
  design->add_option("--budget", request.budget, "Number of directions")->check(CLI::PositiveNumber);
  design->add_option("--candidates", request.candidates, "Hemisphere candidate count")->check(CLI::PositiveNumber);
  design->add_option("--mode", design_mode, "single or region")->check(CLI::IsMember({"single", "region"}));
  design->add_option("--at", design_at, "Voxel coordinate for single mode")->expected(3);
  design->add_option("--out", design_out, "Output directory");

  Common esr_opts;
  int esr_n = 0, esr_iterations = 2000;
  auto* esr = app.add_subcommand("esr", "Electrostatic-repulsion design of n antipodal directions");
  add_common(esr, esr_opts, false);
  esr->add_option("-n,--count", esr_n, "Number of directions")->required();
  esr->add_option("--iterations", esr_iterations, "Descent iterations")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return cmd_simulate(sim_opts);
    if (*prior_build) return cmd_prior_build(build_opts, cohort, cohort_noise);
    if (*prior_interp) return cmd_prior_interp(interp_prior, interp_at, interp_out);
    if (*design) return cmd_design(design_prior, request, design_mode, design_at, design_out);
    if (*esr) return cmd_esr(esr_n, esr_opts, esr_iterations);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
