#include "qspace/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace qspace {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!keys.count(key)) throw ValidationError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config key '") + key + "': " + e.what());
  }
}

Directiond to_direction(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("directions must be [x, y, z] arrays");
  return Directiond(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

void SimConfig::validate() const {
  if (max_degree < 0 || max_degree % 2 != 0) throw ValidationError("max_degree must be even and >= 0");
  if (n_train < 2) throw ValidationError("n_train must be >= 2");
  if (n_test < 1) throw ValidationError("n_test must be >= 1");
  if (dense_size < 2) throw ValidationError("dense_size must be >= 2");
  if (!(noise.sigma >= 0.0)) throw ValidationError("noise sigma must be >= 0");
  if (noise.chi_dof < 1) throw ValidationError("chi_dof must be >= 1");
  if (budgets.empty()) throw ValidationError("budgets must not be empty");
  if (!std::is_sorted(budgets.begin(), budgets.end()) ||
      std::adjacent_find(budgets.begin(), budgets.end()) != budgets.end())
    throw ValidationError("budgets must be strictly ascending");
  if (budgets.front() < 2) throw ValidationError("budgets must be >= 2");
  if (candidates < 1) throw ValidationError("candidates must be >= 1");
  if (budgets.back() > candidates) throw ValidationError("largest budget exceeds the candidate count");
  if (rank_rule.kind == RankRule::Kind::Fixed && rank_rule.rank < 1)
    throw ValidationError("fixed rank must be >= 1");
  if (rank_rule.kind == RankRule::Kind::VarianceFraction &&
      !(rank_rule.fraction > 0.0 && rank_rule.fraction <= 1.0))
    throw ValidationError("variance fraction must lie in (0, 1]");
  if (lambda_grid.empty()) throw ValidationError("GCV grid must not be empty");
  for (double l : lambda_grid)
    if (!(l > 0.0)) throw ValidationError("GCV grid values must be positive");
  if (esr_iterations < 0) throw ValidationError("esr_iterations must be >= 0");
  if (estimate_noise && (b0_repeats < 3 || b0_voxels < 1))
    throw ValidationError("noise estimation needs b0_repeats >= 3 and b0_voxels >= 1");
  if (estimate_noise && noise.sigma == 0.0)
    throw ValidationError("noise estimation requires sigma > 0 (set noise.estimate to false)");
  if (peaks.grid_size < 16 || peaks.neighbors < 1)
    throw ValidationError("peak grid needs >= 16 points and >= 1 neighbor");
  if (!(peaks.relative_threshold >= 0.0 && peaks.relative_threshold <= 1.0))
    throw ValidationError("peak threshold must lie in [0, 1]");
  for (int d : field_dims)
    if (d < 1) throw ValidationError("field dims must be >= 1");
  if (threads < 1) throw ValidationError("threads must be >= 1");
  try {
    generative.validate();
    if (generative.response.size() != 0) require_response(ShBasis(max_degree), generative.response);
  } catch (const DomainError& e) {
    throw ValidationError(e.what());
  }
}

SimConfig config_from_json(const json& j) {
  check_keys(j, "config",
             {"seed", "max_degree", "n_train", "n_test", "dense_size", "noise", "budgets", "rank_rule",
              "generative", "gcv", "candidates", "esr_iterations", "peaks", "field", "threads",
              "output_dir"});
  SimConfig c;
  c.seed = get<std::uint64_t>(j, "seed", c.seed);
  c.max_degree = get<int>(j, "max_degree", c.max_degree);
  c.n_train = get<int>(j, "n_train", c.n_train);
  c.n_test = get<int>(j, "n_test", c.n_test);
  c.dense_size = get<int>(j, "dense_size", c.dense_size);
  c.budgets = get<std::vector<int>>(j, "budgets", c.budgets);
  c.candidates = get<int>(j, "candidates", c.candidates);
  c.esr_iterations = get<int>(j, "esr_iterations", c.esr_iterations);
  c.threads = get<int>(j, "threads", c.threads);
  c.output_dir = get<std::string>(j, "output_dir", c.output_dir.string());

  if (j.contains("noise")) {
    const json& n = j["noise"];
    check_keys(n, "noise", {"sigma", "model", "chi_dof", "estimate", "b0_repeats", "b0_voxels"});
    c.noise.sigma = get<double>(n, "sigma", c.noise.sigma);
    const auto model = get<std::string>(n, "model", "gaussian");
    if (model == "gaussian") {
      c.noise.model = NoiseModel::Gaussian;
    } else if (model == "chi_squared") {
      c.noise.model = NoiseModel::CenteredChiSquared;
    } else {
      throw ValidationError("noise.model must be 'gaussian' or 'chi_squared'");
    }
    c.noise.chi_dof = get<int>(n, "chi_dof", c.noise.chi_dof);
    c.estimate_noise = get<bool>(n, "estimate", c.estimate_noise);
    c.b0_repeats = get<int>(n, "b0_repeats", c.b0_repeats);
    c.b0_voxels = get<int>(n, "b0_voxels", c.b0_voxels);
  }
  if (j.contains("rank_rule")) {
    const json& r = j["rank_rule"];
    check_keys(r, "rank_rule", {"kind", "fraction", "rank"});
    const auto kind = get<std::string>(r, "kind", "variance");
    if (kind == "variance") {
      c.rank_rule = RankRule::variance(get<double>(r, "fraction", 0.90));
    } else if (kind == "fixed") {
      c.rank_rule = RankRule::fixed(get<int>(r, "rank", 0));
    } else {
      throw ValidationError("rank_rule.kind must be 'variance' or 'fixed'");
    }
  }
  if (j.contains("generative")) {
    const json& g = j["generative"];
    check_keys(g, "generative",
               {"component_kappa", "mean_kappa", "weights", "mean_directions", "peak_merge_deg",
                "quadrature_resolution", "response"});
    c.generative.component_kappa = get<double>(g, "component_kappa", c.generative.component_kappa);
    c.generative.mean_kappa = get<double>(g, "mean_kappa", c.generative.mean_kappa);
    c.generative.weights = get<std::vector<double>>(g, "weights", c.generative.weights);
    c.generative.peak_merge_deg = get<double>(g, "peak_merge_deg", c.generative.peak_merge_deg);
    c.generative.quadrature_resolution =
        get<int>(g, "quadrature_resolution", c.generative.quadrature_resolution);
    if (g.contains("mean_directions")) {
      c.generative.mean_directions.clear();
      for (const auto& d : g["mean_directions"]) c.generative.mean_directions.push_back(to_direction(d));
    }
    if (g.contains("response")) {
      const auto r = get<std::vector<double>>(g, "response", {});
      c.generative.response = Eigen::Map<const Vectord>(r.data(), static_cast<Eigen::Index>(r.size()));
    }
  }
  if (j.contains("gcv")) {
    const json& g = j["gcv"];
    check_keys(g, "gcv", {"min", "max", "count", "grid"});
    if (g.contains("grid")) {
      c.lambda_grid = get<std::vector<double>>(g, "grid", {});
    } else {
      try {
        c.lambda_grid = log_grid(get<double>(g, "min", 1e-7), get<double>(g, "max", 1e-1), get<int>(g, "count", 20));
      } catch (const DomainError& e) {
        throw ValidationError(std::string("gcv: ") + e.what());
      }
    }
  }
  if (j.contains("peaks")) {
    const json& p = j["peaks"];
    check_keys(p, "peaks", {"grid_size", "neighbors", "threshold", "refine_steps", "refine_step_deg"});
    c.peaks.grid_size = get<int>(p, "grid_size", c.peaks.grid_size);
    c.peaks.neighbors = get<int>(p, "neighbors", c.peaks.neighbors);
    c.peaks.relative_threshold = get<double>(p, "threshold", c.peaks.relative_threshold);
    c.peaks.refine_steps = get<int>(p, "refine_steps", c.peaks.refine_steps);
    c.peaks.refine_step_deg = get<double>(p, "refine_step_deg", c.peaks.refine_step_deg);
  }
  if (j.contains("field")) {
    const json& f = j["field"];
    check_keys(f, "field", {"dims", "rotation_deg"});
    c.field_dims = get<std::array<int, 3>>(f, "dims", c.field_dims);
    c.field_rotation_deg = get<double>(f, "rotation_deg", c.field_rotation_deg);
  }
  c.validate();
  return c;
}

nlohmann::json config_to_json(const SimConfig& c) {
  json directions = json::array();
  for (const auto& d : c.generative.mean_directions) directions.push_back({d.x(), d.y(), d.z()});
  json rule = c.rank_rule.kind == RankRule::Kind::Fixed
                  ? json{{"kind", "fixed"}, {"rank", c.rank_rule.rank}}
                  : json{{"kind", "variance"}, {"fraction", c.rank_rule.fraction}};
  json generative = {{"component_kappa", c.generative.component_kappa},
                     {"mean_kappa", c.generative.mean_kappa},
                     {"weights", c.generative.weights},
                     {"mean_directions", directions},
                     {"peak_merge_deg", c.generative.peak_merge_deg},
                     {"quadrature_resolution", c.generative.quadrature_resolution}};
  if (c.generative.response.size() != 0)
    generative["response"] = std::vector<double>(c.generative.response.begin(), c.generative.response.end());
  return {
      {"seed", c.seed},
      {"max_degree", c.max_degree},
      {"n_train", c.n_train},
      {"n_test", c.n_test},
      {"dense_size", c.dense_size},
      {"noise",
       {{"sigma", c.noise.sigma},
        {"model", c.noise.model == NoiseModel::Gaussian ? "gaussian" : "chi_squared"},
        {"chi_dof", c.noise.chi_dof},
        {"estimate", c.estimate_noise},
        {"b0_repeats", c.b0_repeats},
        {"b0_voxels", c.b0_voxels}}},
      {"budgets", c.budgets},
      {"rank_rule", rule},
      {"generative", generative},
      {"gcv", {{"grid", c.lambda_grid}}},
      {"candidates", c.candidates},
      {"esr_iterations", c.esr_iterations},
      {"peaks",
       {{"grid_size", c.peaks.grid_size},
        {"neighbors", c.peaks.neighbors},
        {"threshold", c.peaks.relative_threshold},
        {"refine_steps", c.peaks.refine_steps},
        {"refine_step_deg", c.peaks.refine_step_deg}}},
      {"field", {{"dims", c.field_dims}, {"rotation_deg", c.field_rotation_deg}}},
      {"threads", c.threads},
      {"output_dir", c.output_dir.string()},
  };
}

SimConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace qspace
