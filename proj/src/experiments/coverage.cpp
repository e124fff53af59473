#include <algorithm>
#include <filesystem>
#include <random>

#include <spdlog/spdlog.h>

#include "cyclic/core/rollout.hpp"
#include "cyclic/envs/linear_env.hpp"
#include "cyclic/experiments/csv.hpp"
#include "cyclic/experiments/experiments.hpp"
#include "cyclic/experiments/trials.hpp"
#include "cyclic/inference/sieve.hpp"

namespace cyclic {

using nlohmann::json;

namespace {

std::string out_path(const ExperimentConfig& config, const std::string& file) {
  return (std::filesystem::path(config.output_dir) / file).string();
}

json truth_json(const GroundTruth& t) {
  return json{{"method", t.method}, {"v_star", to_std(t.values)}, {"standard_errors", to_std(t.standard_errors)}};
}

}  // namespace

GroundTruth compute_ground_truth(const ExperimentConfig& config) {
  if (config.environment != "linear") throw ConfigError("ground truth is only defined for the linear environment");
  const auto params = resolve_linear_env_params(config.environment_params);
  const auto optimum = solve_linear_env(params);
  GroundTruth truth;
  const int K = params.num_stages();
  if (config.ground_truth.method == GroundTruthMethod::analytic) {
    truth.values = optimum.values;
    truth.standard_errors = Vector::Zero(K);
    truth.method = "analytic";
    return truth;
  }
  const auto spec = make_linear_env(params);
  std::vector<int> counts;
  for (const auto& st : spec.stages) counts.push_back(st.action_count);
  const auto policy = constant_action_policy(optimum.actions, counts);
  truth.values.resize(K);
  truth.standard_errors.resize(K);
  for (int k = 0; k < K; ++k) {
    Rng rng = make_rng({config.ground_truth.seed, static_cast<std::uint64_t>(k)});
    const auto est = monte_carlo_estimate(spec, policy, k, config.ground_truth.trajectories, config.ground_truth.cycles, rng);
    truth.values[k] = est.mean;
    truth.standard_errors[k] = est.standard_error;
  }
  truth.method = "monte-carlo";
  return truth;
}

CoverageTrial run_coverage_trial(const Environment& env, const ExperimentConfig& config, const Vector& v_star,
                                 int n_per_stage, int trial) {
  CoverageTrial out;
  out.n = n_per_stage * env.spec.num_stages();
  out.trial = trial;
  out.seed = config.seed + static_cast<std::uint64_t>(trial);
  Rng data_rng = make_rng({out.seed, static_cast<std::uint64_t>(n_per_stage)});
  const auto data = sample_offline_dataset(env.spec, PolicyVector::uniform(env.spec), n_per_stage, env.sampling, data_rng);
  const auto result = ensemble_evaluate(data, env.spec, config.folds, config.train, config.inference, out.seed);
  out.v_hat = result.v_hat;
  out.sigma_hat = result.sigma_hat;
  out.d2 = mahalanobis_d2(result, v_star);
  out.covered = confidence_region_contains(result, v_star, config.inference.level);
  return out;
}

CoverageRow summarize_coverage(const std::vector<CoverageTrial>& trials, int n, int n_per_stage, const Vector& v_star) {
  CoverageRow row;
  row.n = n;
  row.n_per_stage = n_per_stage;
  int covered = 0;
  double sq = 0.0;
  for (const auto& t : trials) {
    if (t.n != n) continue;
    if (!t.error.empty()) {
      ++row.failures;
      continue;
    }
    ++row.trials;
    covered += t.covered ? 1 : 0;
    sq += (t.v_hat - v_star).squaredNorm();
  }
  if (row.trials > 0) {
    row.coverage = 100.0 * covered / row.trials;
    row.mse = sq / row.trials;
  }
  return row;
}

CoverageReport run_coverage_experiment(const ExperimentConfig& config) {
  config.validate();
  if (config.environment != "linear") throw ConfigError("the coverage experiment needs the linear environment");
  const auto env = make_environment(config.environment, config.environment_params);
  CoverageReport report;
  report.truth = compute_ground_truth(config);
  report.threshold = chi2_quantile(env.spec.num_stages(), config.inference.level);
  std::string shown;
  for (Eigen::Index k = 0; k < report.truth.values.size(); ++k) shown += (k ? ", " : "") + format_number(report.truth.values[k]);
  spdlog::info("coverage: v* = [{}] ({})", shown, report.truth.method);

  const int T = config.trials;
  for (int n_stage : config.n_per_stage) {
    const auto outcomes = run_trials<CoverageTrial>(T, config.threads, [&](int t) {
      return run_coverage_trial(env, config, report.truth.values, n_stage, t);
    });
    std::vector<CoverageTrial> trials;
    for (const auto& o : outcomes) {
      if (o.ok()) {
        trials.push_back(*o.value);
        continue;
      }
      CoverageTrial failed;
      failed.n = n_stage * env.spec.num_stages();
      failed.trial = o.index;
      failed.seed = config.seed + static_cast<std::uint64_t>(o.index);
      failed.error = o.error;
      spdlog::warn("coverage n={} trial {} failed: {}", failed.n, o.index, o.error);
      trials.push_back(std::move(failed));
    }
    const int n = n_stage * env.spec.num_stages();
    report.rows.push_back(summarize_coverage(trials, n, n_stage, report.truth.values));
    const auto& row = report.rows.back();
    spdlog::info("coverage n={}: {:.1f}% mse {:.4g} ({} trials, {} failed)", n, row.coverage, row.mse, row.trials,
                 row.failures);
    report.trials.insert(report.trials.end(), trials.begin(), trials.end());
  }
  return report;
}

std::vector<std::string> write_coverage_report(const CoverageReport& report, const ExperimentConfig& config) {
  const json header{{"config", experiment_config_to_json(config)},
                    {"ground_truth", truth_json(report.truth)},
                    {"threshold", report.threshold}};
  CsvTable summary({"n", "n_per_stage", "coverage_percent", "mse", "trials", "failures"});
  for (const auto& r : report.rows)
    summary.row().add(r.n).add(r.n_per_stage).add(r.coverage).add(r.mse).add(r.trials).add(r.failures);

  const int K = static_cast<int>(report.truth.values.size());
  std::vector<std::string> cols{"n", "trial", "seed"};
  for (int k = 1; k <= K; ++k) cols.push_back("v_hat_" + std::to_string(k));
  for (int i = 1; i <= K; ++i)
    for (int j = 1; j <= K; ++j) cols.push_back("sigma_" + std::to_string(i) + std::to_string(j));
  for (const char* c : {"d2", "covered", "error"}) cols.emplace_back(c);
  CsvTable trials(cols);
  for (const auto& t : report.trials) {
    trials.row().add(t.n).add(t.trial).add(static_cast<unsigned long long>(t.seed));
    const bool ok = t.error.empty();
    for (int k = 0; k < K; ++k) trials.add(ok ? t.v_hat[k] : std::nan(""));
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) trials.add(ok ? t.sigma_hat(i, j) : std::nan(""));
    trials.add(ok ? t.d2 : std::nan("")).add(t.covered).add(t.error);
  }
  const auto a = out_path(config, "coverage_summary.csv");
  const auto b = out_path(config, "coverage_trials.csv");
  summary.write(a, header);
  trials.write(b, header);
  return {a, b};
}

QqReport qq_from_d2(std::vector<double> d2, int dof) {
  require(!d2.empty(), "qq diagnostic needs at least one D^2 value");
  std::sort(d2.begin(), d2.end());
  QqReport report;
  report.dof = dof;
  const double T = static_cast<double>(d2.size());
  for (std::size_t i = 0; i < d2.size(); ++i) {
    const double p = (static_cast<double>(i) + 0.5) / T;
    report.rows.push_back({static_cast<int>(i) + 1, d2[i], chi2_quantile(dof, p)});
  }
  report.ks = ks_test_chi2(d2, dof);
  return report;
}

QqReport run_qq_diagnostic(const ExperimentConfig& config) {
  config.validate();
  const auto env = make_environment(config.environment, config.environment_params);
  const int K = env.spec.num_stages();
  std::vector<double> d2;
  if (config.debug_chi2_sampler) {
    Rng rng = make_rng({config.seed});
    std::chi_squared_distribution<double> chi(K);
    for (int t = 0; t < config.trials; ++t) d2.push_back(chi(rng));
  } else if (!config.qq_input.empty()) {
    const auto rows = read_csv(config.qq_input);
    require(!rows.empty(), "'" + config.qq_input + "' has no header row");
    const auto& head = rows.front();
    const auto col = std::find(head.begin(), head.end(), "d2") - head.begin();
    const auto err = std::find(head.begin(), head.end(), "error") - head.begin();
    require(col < static_cast<long>(head.size()), "'" + config.qq_input + "' has no d2 column");
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (err < static_cast<long>(rows[r].size()) && !rows[r][static_cast<std::size_t>(err)].empty()) continue;
      d2.push_back(std::stod(rows[r].at(static_cast<std::size_t>(col))));
    }
  } else {
    ExperimentConfig c = config;
    c.kind = ExperimentKind::coverage;
    c.n_per_stage = {config.n_per_stage.front()};
    const auto report = run_coverage_experiment(c);
    for (const auto& t : report.trials)
      if (t.error.empty()) d2.push_back(t.d2);
  }
  return qq_from_d2(std::move(d2), K);
}

std::vector<std::string> write_qq_report(const QqReport& report, const ExperimentConfig& config) {
  const json header{{"config", experiment_config_to_json(config)}, {"dof", report.dof}};
  CsvTable qq({"index", "empirical_d2", "chi2_quantile"});
  for (const auto& r : report.rows) qq.row().add(r.index).add(r.empirical).add(r.theoretical);
  CsvTable summary({"count", "dof", "ks_statistic", "ks_p_value"});
  summary.row()
      .add(static_cast<int>(report.rows.size()))
      .add(report.dof)
      .add(report.ks.statistic)
      .add(report.ks.p_value);
  const auto a = out_path(config, "qq.csv");
  const auto b = out_path(config, "qq_summary.csv");
  qq.write(a, header);
  summary.write(b, header);
  return {a, b};
}

}  // namespace cyclic
