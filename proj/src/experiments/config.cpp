#include "cyclic/experiments/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cyclic/envs/registry.hpp"

namespace cyclic {

using nlohmann::json;

namespace {

const std::vector<std::pair<ExperimentKind, std::string>>& kind_names() {
  static const std::vector<std::pair<ExperimentKind, std::string>> names{
      {ExperimentKind::policy_benchmark, "policy-benchmark"},
      {ExperimentKind::coverage, "coverage"},
      {ExperimentKind::qq_diagnostic, "qq-diagnostic"},
      {ExperimentKind::contraction_suite, "contraction-suite"},
      {ExperimentKind::tune_forest, "tune-forest"},
  };
  return names;
}

std::string ground_truth_name(GroundTruthMethod m) { return m == GroundTruthMethod::analytic ? "analytic" : "monte-carlo"; }

GroundTruthMethod ground_truth_from_string(const std::string& s) {
  if (s == "analytic") return GroundTruthMethod::analytic;
  if (s == "monte-carlo") return GroundTruthMethod::monte_carlo;
  throw ConfigError("unknown ground truth method '" + s + "' (expected analytic or monte-carlo)");
}

// Forest used by the glucose experiments; see the README for the runtime budget.
RandomForestSpec benchmark_forest() {
  RandomForestSpec f;
  f.num_trees = 20;
  f.min_leaf = 5;
  f.feature_subsample = 1.0;
  return f;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  for (const auto& [k, n] : kind_names())
    if (k == kind) return n;
  return "unknown";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (const auto& [k, n] : kind_names())
    if (n == s) return k;
  throw ConfigError("unknown experiment kind '" + s + "'");
}

ExperimentConfig default_experiment_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
    case ExperimentKind::coverage:
    case ExperimentKind::qq_diagnostic:
      c.environment = "linear";
      c.environment_params = json{{"seed", 0}};
      c.n_per_stage = kind == ExperimentKind::coverage ? std::vector<int>{200, 800} : std::vector<int>{800};
      c.trials = 200;
      c.folds = 2;
      c.seed = 0;
      c.train.iterations = 150;
      c.train.regressor = LinearSieveSpec{BasisSpec::quadratic(1), std::nullopt};
      break;
    case ExperimentKind::policy_benchmark:
      c.environment = "glucose";
      c.n_per_stage = {100, 200, 500};
      c.trials = 100;
      c.seed = 1000;
      c.eval_seed = 1001;
      c.train.iterations = 30;
      c.train.regressor = benchmark_forest();
      c.train.stage_model = StageModel::per_stage;
      c.update_sets = {"all", "day/evening"};
      break;
    case ExperimentKind::tune_forest:
      c.environment = "glucose";
      c.trials = 1;
      c.train.regressor = benchmark_forest();
      c.train.stage_model = StageModel::per_stage;
      break;
    case ExperimentKind::contraction_suite:
      c.environment = "finite";
      c.trials = 1;
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  check(trials >= 1, "trials must be >= 1");
  check(threads >= 0, "threads must be >= 0 (0 = all hardware threads)");
  try {
    train.validate();
    inference.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (kind == ExperimentKind::contraction_suite) {
    check(contraction.pairs >= 1, "contraction.pairs must be >= 1");
    check(contraction.tolerance >= 0.0, "contraction.tolerance must be >= 0");
    return;
  }
  const auto names = environment_names();
  check(std::find(names.begin(), names.end(), environment) != names.end(),
        "unknown environment '" + environment + "'");
  if (kind == ExperimentKind::tune_forest) {
    check(!tune.tree_grid.empty(), "tune.tree_grid must not be empty");
    for (int t : tune.tree_grid) check(t >= 1, "tune.tree_grid entries must be >= 1");
    check(tune.n_per_stage >= 1 && tune.iterations >= 1 && tune.eval_trajectories >= 1 && tune.eval_days >= 1,
          "tune sizes must be >= 1");
    check(std::holds_alternative<RandomForestSpec>(train.regressor), "tune-forest needs a random-forest regressor");
    return;
  }
  if (kind == ExperimentKind::qq_diagnostic && (debug_chi2_sampler || !qq_input.empty())) return;
  check(!n_per_stage.empty(), "n_per_stage must list at least one sample size");
  for (int n : n_per_stage) check(n >= 1, "n_per_stage entries must be >= 1");
  if (kind == ExperimentKind::policy_benchmark) {
    check(!update_sets.empty(), "update_sets must not be empty");
    check(eval_days >= 1 && eval_episodes >= 1, "eval_days and eval_episodes must be >= 1");
    // Resolve every name now so that a typo fails before any trial runs.
    const auto env = make_environment(environment, environment_params);
    for (const auto& u : update_sets) parse_update_set(u, env.spec);
  } else {
    check(folds >= 2, "folds must be >= 2");
    check(ground_truth.trajectories >= 1 && ground_truth.cycles >= 1, "ground_truth sizes must be >= 1");
    check(ground_truth.method == GroundTruthMethod::monte_carlo || environment == "linear",
          "analytic ground truth is only available for the linear environment");
  }
}

ExperimentConfig experiment_config_from_json(const json& j) {
  try {
    const auto kind = experiment_kind_from_string(j.value("experiment", std::string("coverage")));
    ExperimentConfig c = default_experiment_config(kind);
    c.environment = j.value("environment", c.environment);
    if (j.contains("environment_params")) c.environment_params = j.at("environment_params");
    if (j.contains("n_per_stage")) {
      const auto& n = j.at("n_per_stage");
      c.n_per_stage = n.is_array() ? n.get<std::vector<int>>() : std::vector<int>{n.get<int>()};
    }
    c.trials = j.value("trials", c.trials);
    c.folds = j.value("folds", c.folds);
    c.seed = j.value("seed", c.seed);
    c.eval_seed = j.value("eval_seed", c.eval_seed);
    if (j.contains("train")) {
      json t = train_config_to_json(c.train);
      t.update(j.at("train"));
      c.train = train_config_from_json(t);
    }
    if (j.contains("update_sets")) c.update_sets = j.at("update_sets").get<std::vector<std::string>>();
    c.output_dir = j.value("output_dir", c.output_dir);
    c.threads = j.value("threads", c.threads);
    c.eval_days = j.value("eval_days", c.eval_days);
    c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
    if (j.contains("inference")) {
      json i = inference_config_to_json(c.inference);
      i.update(j.at("inference"));
      c.inference = inference_config_from_json(i);
    }
    if (j.contains("ground_truth")) {
      const auto& g = j.at("ground_truth");
      if (g.contains("method")) c.ground_truth.method = ground_truth_from_string(g.at("method").get<std::string>());
      c.ground_truth.trajectories = g.value("trajectories", c.ground_truth.trajectories);
      c.ground_truth.cycles = g.value("cycles", c.ground_truth.cycles);
      c.ground_truth.seed = g.value("seed", c.ground_truth.seed);
    }
    if (j.contains("tune")) {
      const auto& t = j.at("tune");
      if (t.contains("tree_grid")) c.tune.tree_grid = t.at("tree_grid").get<std::vector<int>>();
      c.tune.n_per_stage = t.value("n_per_stage", c.tune.n_per_stage);
      c.tune.iterations = t.value("iterations", c.tune.iterations);
      c.tune.train_seed = t.value("train_seed", c.tune.train_seed);
      c.tune.eval_seed = t.value("eval_seed", c.tune.eval_seed);
      c.tune.eval_trajectories = t.value("eval_trajectories", c.tune.eval_trajectories);
      c.tune.eval_days = t.value("eval_days", c.tune.eval_days);
    }
    if (j.contains("contraction")) {
      const auto& t = j.at("contraction");
      c.contraction.pairs = t.value("pairs", c.contraction.pairs);
      c.contraction.tolerance = t.value("tolerance", c.contraction.tolerance);
      c.contraction.apply_stage_discount = t.value("apply_stage_discount", c.contraction.apply_stage_discount);
      c.contraction.seed = t.value("seed", c.contraction.seed);
    }
    c.debug_chi2_sampler = j.value("debug_chi2_sampler", c.debug_chi2_sampler);
    c.qq_input = j.value("qq_input", c.qq_input);
    return c;
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

json experiment_config_to_json(const ExperimentConfig& c) {
  return json{{"experiment", to_string(c.kind)},
              {"environment", c.environment},
              {"environment_params", c.environment_params},
              {"n_per_stage", c.n_per_stage},
              {"trials", c.trials},
              {"folds", c.folds},
              {"seed", c.seed},
              {"eval_seed", c.eval_seed},
              {"train", train_config_to_json(c.train)},
              {"update_sets", c.update_sets},
              {"output_dir", c.output_dir},
              {"threads", c.threads},
              {"eval_days", c.eval_days},
              {"eval_episodes", c.eval_episodes},
              {"inference", inference_config_to_json(c.inference)},
              {"ground_truth",
               {{"method", ground_truth_name(c.ground_truth.method)},
                {"trajectories", c.ground_truth.trajectories},
                {"cycles", c.ground_truth.cycles},
                {"seed", c.ground_truth.seed}}},
              {"tune",
               {{"tree_grid", c.tune.tree_grid},
                {"n_per_stage", c.tune.n_per_stage},
                {"iterations", c.tune.iterations},
                {"train_seed", c.tune.train_seed},
                {"eval_seed", c.tune.eval_seed},
                {"eval_trajectories", c.tune.eval_trajectories},
                {"eval_days", c.tune.eval_days}}},
              {"contraction",
               {{"pairs", c.contraction.pairs},
                {"tolerance", c.contraction.tolerance},
                {"apply_stage_discount", c.contraction.apply_stage_discount},
                {"seed", c.contraction.seed}}},
              {"debug_chi2_sampler", c.debug_chi2_sampler},
              {"qq_input", c.qq_input}};
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

UpdateSet parse_update_set(const std::string& name_in, const CyclicMdpSpec& spec) {
  const int K = spec.num_stages();
  const std::string name = trim(name_in);
  if (name == "all") return UpdateSet::all(K);
  if (name == "none") return UpdateSet::none(K);
  std::vector<int> members;
  const bool numeric = name.find_first_not_of("0123456789, ") == std::string::npos;
  std::stringstream ss(name);
  std::string part;
  while (std::getline(ss, part, numeric ? ',' : '/')) {
    part = trim(part);
    if (part.empty()) continue;
    int k = -1;
    if (numeric) {
      k = std::stoi(part) - 1;
    } else {
      for (int i = 0; i < K; ++i)
        if (spec.stage(i).name == part) k = i;
    }
    if (k < 0 || k >= K) throw ConfigError("update set '" + name_in + "': unknown stage '" + part + "'");
    members.push_back(k);
  }
  if (members.empty()) throw ConfigError("update set '" + name_in + "' names no stage");
  return UpdateSet::of(K, members);
}

}  // namespace cyclic
