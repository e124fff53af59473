#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cyclic/core/dataset_io.hpp"
#include "cyclic/experiments/experiments.hpp"
#include "cyclic/fqi/cyclefqi.hpp"
#include "cyclic/inference/sieve.hpp"

using nlohmann::json;
using namespace cyclic;

namespace {

constexpr int kExperimentFailure = 1;
constexpr int kConfigError = 2;

// Flags shared by every experiment subcommand; unset ones leave the config file alone.
struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> trials;
  std::vector<int> n_per_stage;
  std::optional<int> folds;
  std::optional<int> threads;
  std::optional<std::string> env;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "base seed (trial t uses seed + t)");
  cmd->add_option("--out-dir", f.out_dir, "directory for CSV artifacts");
  cmd->add_option("--trials", f.trials, "number of trials");
  cmd->add_option("--n-per-stage", f.n_per_stage, "samples per stage (repeatable)");
  cmd->add_option("--folds", f.folds, "cross-fitting folds N");
  cmd->add_option("--threads", f.threads, "worker threads (0 = hardware)");
  cmd->add_option("--env", f.env, "environment name");
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

json parse_json_arg(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(what + " is not valid JSON: " + e.what());
  }
}

ExperimentConfig resolve(ExperimentKind kind, const CommonFlags& f, const json& extra = json::object()) {
  json j = f.config_path.empty() ? json::object() : read_json_file(f.config_path);
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  const auto name = to_string(kind);
  if (j.contains("experiment") && j.at("experiment") != name)
    throw ConfigError("config is for experiment '" + j.at("experiment").dump() + "', not '" + name + "'");
  j["experiment"] = name;
  if (f.seed) j["seed"] = *f.seed;
  if (f.out_dir) j["output_dir"] = *f.out_dir;
  if (f.trials) j["trials"] = *f.trials;
  if (!f.n_per_stage.empty()) j["n_per_stage"] = f.n_per_stage;
  if (f.folds) j["folds"] = *f.folds;
  if (f.threads) j["threads"] = *f.threads;
  if (f.env) j["environment"] = *f.env;
  for (const auto& [key, value] : extra.items()) {
    if (value.is_object() && j.contains(key) && j[key].is_object())
      j[key].update(value);
    else
      j[key] = value;
  }
  auto config = experiment_config_from_json(j);
  config.validate();
  return config;
}

void print_paths(const std::vector<std::string>& paths) {
  for (const auto& p : paths) std::cout << p << '\n';
}

int finish(int failures, int total) {
  if (total > 0 && failures >= total) {
    spdlog::error("every trial failed");
    return kExperimentFailure;
  }
  if (failures > 0) spdlog::warn("{} trial(s) failed; see the error column", failures);
  return 0;
}

Environment environment_from(const std::string& name, const std::string& params) {
  const auto p = params.empty() ? json::object() : parse_json_arg(params, "--env-params");
  try {
    return make_environment(name, p);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("cyclic"));

  CLI::App app{"Offline reinforcement learning for cyclic MDPs: training, inference and experiments"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "sample an offline dataset under the uniform behavior policy");
  std::string gen_env = "linear", gen_params, gen_out;
  int gen_n = 200;
  std::uint64_t gen_seed = 0;
  gen->add_option("--env", gen_env, "environment name");
  gen->add_option("--env-params", gen_params, "environment parameters as JSON");
  gen->add_option("--n-per-stage", gen_n, "transitions per stage");
  gen->add_option("--seed", gen_seed, "sampling seed");
  gen->add_option("--out", gen_out, "output dataset (line-delimited JSON)")->required();

  // train
  auto* train = app.add_subcommand("train", "run CycleFQI on a dataset and write a checkpoint");
  std::string train_env = "linear", train_params, train_data, train_out, train_config, train_update = "all";
  std::optional<int> train_iters, train_trees;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::string> train_layout;
  train->add_option("--env", train_env, "environment name");
  train->add_option("--env-params", train_params, "environment parameters as JSON");
  train->add_option("--data", train_data, "dataset file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "checkpoint file (JSON)")->required();
  train->add_option("--config", train_config, "JSON file whose \"train\" object overrides the defaults")
      ->check(CLI::ExistingFile);
  train->add_option("--iterations", train_iters, "FQI iterations M");
  train->add_option("--trees", train_trees, "forest size");
  train->add_option("--seed", train_seed, "training seed");
  train->add_option("--stage-model", train_layout, "per-action or per-stage");
  train->add_option("--update-set", train_update, "stages to optimize: all, none, names joined by '/' or 1-based indices");

  // eval
  auto* eval = app.add_subcommand("eval", "mean undiscounted reward of a checkpoint's greedy policy");
  std::string eval_env = "linear", eval_params, eval_ckpt;
  bool eval_random = false;
  int eval_days = 50, eval_episodes = 10;
  std::uint64_t eval_seed = 1001;
  eval->add_option("--env", eval_env, "environment name");
  eval->add_option("--env-params", eval_params, "environment parameters as JSON");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint written by train")->check(CLI::ExistingFile);
  eval->add_flag("--random", eval_random, "evaluate the uniform-random policy instead");
  eval->add_option("--days", eval_days, "cycles per episode");
  eval->add_option("--episodes", eval_episodes, "episodes");
  eval->add_option("--seed", eval_seed, "evaluation seed");

  // infer
  auto* infer = app.add_subcommand("infer", "cross-fitted sieve inference for the learned policy's value");
  CommonFlags infer_flags;
  std::string infer_data, infer_params, infer_out;
  std::optional<double> infer_level;
  add_common(infer, infer_flags);
  infer->add_option("--data", infer_data, "dataset file")->required()->check(CLI::ExistingFile);
  infer->add_option("--env-params", infer_params, "environment parameters as JSON");
  infer->add_option("--level", infer_level, "confidence level");
  infer->add_option("--out", infer_out, "write the inference record here instead of stdout");

  // coverage
  auto* coverage = app.add_subcommand("coverage", "joint coverage of the confidence region on the linear environment");
  CommonFlags cov_flags;
  std::optional<std::string> cov_truth;
  std::optional<double> cov_inflation;
  add_common(coverage, cov_flags);
  coverage->add_option("--ground-truth", cov_truth, "analytic or monte-carlo");
  coverage->add_option("--sigma-inflation", cov_inflation, "debug: multiply every covariance estimate");

  // qq
  auto* qq = app.add_subcommand("qq", "D^2 order statistics against chi-squared quantiles, with a KS test");
  CommonFlags qq_flags;
  std::optional<std::string> qq_input;
  bool qq_debug = false;
  add_common(qq, qq_flags);
  qq->add_option("--input", qq_input, "reuse the d2 column of a coverage_trials.csv")->check(CLI::ExistingFile);
  qq->add_flag("--debug-chi2-sampler", qq_debug, "draw D^2 directly from chi-squared(K)");

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "CycleFQI vs flattened FQI vs uniform random on the glucose environment");
  CommonFlags bench_flags;
  std::vector<std::string> bench_sets;
  std::optional<int> bench_days, bench_episodes;
  add_common(bench, bench_flags);
  bench->add_option("--update-set", bench_sets, "update sets (repeatable)");
  bench->add_option("--eval-days", bench_days, "cycles per evaluation episode");
  bench->add_option("--eval-episodes", bench_episodes, "evaluation episodes per policy");

  // tune-forest
  auto* tune = app.add_subcommand("tune-forest", "select the forest size by simulated reward");
  CommonFlags tune_flags;
  std::vector<int> tune_grid;
  add_common(tune, tune_flags);
  tune->add_option("--grid", tune_grid, "tree counts to try");

  // contraction
  auto* contraction = app.add_subcommand("contraction", "empirical check of the Bellman operator's contraction properties");
  CommonFlags con_flags;
  std::optional<int> con_pairs;
  bool con_broken = false;
  add_common(contraction, con_flags);
  contraction->add_option("--pairs", con_pairs, "random Q pairs");
  contraction->add_flag("--skip-stage-discount", con_broken, "debug: run the operator without gamma_k");

  // env describe
  auto* env_cmd = app.add_subcommand("env", "environment utilities");
  auto* describe = env_cmd->add_subcommand("describe", "print an environment's active parameterization");
  env_cmd->require_subcommand(1);
  std::string describe_name, describe_params;
  describe->add_option("name", describe_name, "environment name")->required();
  describe->add_option("--env-params", describe_params, "environment parameters as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));

    if (*gen) {
      const auto env = environment_from(gen_env, gen_params);
      Rng rng = make_rng({gen_seed, static_cast<std::uint64_t>(gen_n)});
      const auto data = sample_offline_dataset(env.spec, PolicyVector::uniform(env.spec), gen_n, env.sampling, rng);
      write_dataset(gen_out, data);
      std::cout << gen_out << '\n';
      return 0;
    }

    if (*train) {
      const auto env = environment_from(train_env, train_params);
      json t = train_config_to_json(TrainConfig{});
      if (!train_config.empty()) {
        const auto file = read_json_file(train_config);
        if (file.contains("train")) t.update(file.at("train"));
      }
      if (train_iters) t["iterations"] = *train_iters;
      if (train_seed) t["seed"] = *train_seed;
      if (train_layout) t["stage_model"] = *train_layout;
      TrainConfig tc;
      try {
        tc = train_config_from_json(t);
        if (train_trees) {
          auto* forest = std::get_if<RandomForestSpec>(&tc.regressor);
          if (!forest) throw ConfigError("--trees needs a random-forest regressor");
          forest->num_trees = *train_trees;
        }
        tc.validate();
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
      const auto U = parse_update_set(train_update, env.spec);
      const auto data = read_dataset(train_data, env.spec.num_stages());
      const auto result = train_cyclefqi(data, env.spec, U, PolicyVector::uniform(env.spec), tc);
      std::ofstream out(train_out);
      if (!out) throw Error("cannot write '" + train_out + "'");
      out << qvector_to_json(*result.q, tc).dump(2) << '\n';
      std::cout << train_out << '\n';
      return 0;
    }

    if (*eval) {
      const auto env = environment_from(eval_env, eval_params);
      PolicyVector policy = PolicyVector::uniform(env.spec);
      if (!eval_random) {
        if (eval_ckpt.empty()) throw ConfigError("eval needs --checkpoint or --random");
        auto q = std::make_shared<const QVector>(qvector_from_json(read_json_file(eval_ckpt)));
        if (q->num_stages() != env.spec.num_stages()) throw ConfigError("checkpoint does not match the environment");
        policy = greedy_policy(q);
      }
      const double mean = evaluate_total_reward(env.spec, policy, eval_days, eval_episodes, eval_seed);
      std::cout << json{{"environment", env.name},
                        {"policy", eval_random ? "uniform-random" : "greedy"},
                        {"days", eval_days},
                        {"episodes", eval_episodes},
                        {"seed", eval_seed},
                        {"mean_total_reward", mean}}
                       .dump(2)
                << '\n';
      return 0;
    }

    if (*infer) {
      json extra = json::object();
      if (!infer_params.empty()) extra["environment_params"] = parse_json_arg(infer_params, "--env-params");
      if (infer_level) extra["inference"] = json{{"level", *infer_level}};
      const auto config = resolve(ExperimentKind::coverage, infer_flags, extra);
      const auto env = make_environment(config.environment, config.environment_params);
      const auto data = read_dataset(infer_data, env.spec.num_stages());
      const auto result = ensemble_evaluate(data, env.spec, config.folds, config.train, config.inference, config.seed);
      const auto record = inference_result_to_json(result, config.inference.level).dump(2);
      if (infer_out.empty()) {
        std::cout << record << '\n';
      } else {
        std::ofstream out(infer_out);
        if (!out) throw Error("cannot write '" + infer_out + "'");
        out << record << '\n';
        std::cout << infer_out << '\n';
      }
      return 0;
    }

    if (*coverage) {
      json extra = json::object();
      if (cov_truth) extra["ground_truth"] = json{{"method", *cov_truth}};
      if (cov_inflation) extra["inference"] = json{{"sigma_inflation", *cov_inflation}};
      const auto config = resolve(ExperimentKind::coverage, cov_flags, extra);
      const auto report = run_coverage_experiment(config);
      print_paths(write_coverage_report(report, config));
      int failures = 0;
      for (const auto& r : report.rows) failures += r.failures;
      return finish(failures, static_cast<int>(report.trials.size()));
    }

    if (*qq) {
      json extra = json::object();
      if (qq_input) extra["qq_input"] = *qq_input;
      if (qq_debug) extra["debug_chi2_sampler"] = true;
      const auto config = resolve(ExperimentKind::qq_diagnostic, qq_flags, extra);
      const auto report = run_qq_diagnostic(config);
      print_paths(write_qq_report(report, config));
      spdlog::info("qq: KS statistic {:.4f}, p-value {:.4f} over {} values", report.ks.statistic, report.ks.p_value,
                   report.rows.size());
      return 0;
    }

    if (*bench) {
      json extra = json::object();
      if (!bench_sets.empty()) extra["update_sets"] = bench_sets;
      if (bench_days) extra["eval_days"] = *bench_days;
      if (bench_episodes) extra["eval_episodes"] = *bench_episodes;
      const auto config = resolve(ExperimentKind::policy_benchmark, bench_flags, extra);
      const auto report = run_policy_benchmark(config);
      print_paths(write_benchmark_report(report, config));
      int failures = 0;
      for (const auto& t : report.trials) failures += t.error.empty() ? 0 : 1;
      return finish(failures, static_cast<int>(report.trials.size()));
    }

    if (*tune) {
      json extra = json::object();
      if (!tune_grid.empty()) extra["tune"] = json{{"tree_grid", tune_grid}};
      const auto config = resolve(ExperimentKind::tune_forest, tune_flags, extra);
      const auto report = run_tune_forest(config);
      print_paths(write_tune_report(report, config));
      spdlog::info("tune-forest: selected {} trees for CycleFQI, {} for flattened FQI", report.selected_cyclefqi,
                   report.selected_flattened);
      int failures = 0;
      for (const auto& r : report.rows) failures += r.error.empty() ? 0 : 1;
      return finish(failures, static_cast<int>(report.rows.size()));
    }

    if (*contraction) {
      json extra = json::object();
      if (con_pairs) extra["contraction"]["pairs"] = *con_pairs;
      if (con_broken) extra["contraction"]["apply_stage_discount"] = false;
      if (con_flags.seed) extra["contraction"]["seed"] = *con_flags.seed;
      const auto config = resolve(ExperimentKind::contraction_suite, con_flags, extra);
      const auto report = run_contraction_suite(config);
      print_paths(write_contraction_report(report, config));
      if (!report.all_passed()) {
        spdlog::error("contraction: at least one check failed");
        return kExperimentFailure;
      }
      return 0;
    }

    if (*describe) {
      const auto env = environment_from(describe_name, describe_params);
      std::cout << env.description.dump(2) << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExperimentFailure;
  }
  return 0;
}
