#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cyclic/envs/glucose.hpp"
#include "cyclic/experiments/config.hpp"
#include "cyclic/experiments/csv.hpp"
#include "cyclic/experiments/experiments.hpp"
#include "cyclic/experiments/trials.hpp"

using namespace cyclic;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string data_lines(const std::string& path) {
  std::string out, line;
  std::istringstream in(slurp(path));
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') out += line + "\n";
  return out;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("cyclic_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_coverage(const fs::path& dir) {
  auto c = default_experiment_config(ExperimentKind::coverage);
  c.n_per_stage = {100};
  c.trials = 4;
  c.train.iterations = 5;
  c.train.regressor = RandomForestSpec{5, 0, 5, 1.0};
  c.inference.num_eta_samples = 500;
  c.output_dir = dir.string();
  c.threads = 1;
  return c;
}

ExperimentConfig small_benchmark(const std::string& env) {
  auto c = default_experiment_config(ExperimentKind::policy_benchmark);
  c.environment = env;
  c.n_per_stage = {20};
  c.trials = 1;
  c.train.iterations = 2;
  c.train.regressor = RandomForestSpec{3, 0, 5, 1.0};
  c.eval_days = 2;
  c.eval_episodes = 2;
  c.threads = 1;
  return c;
}

CoverageTrial fake_trial(int n, Vector v_hat, bool covered, std::string error = "") {
  CoverageTrial t;
  t.n = n;
  t.v_hat = std::move(v_hat);
  t.covered = covered;
  t.error = std::move(error);
  return t;
}

}  // namespace

TEST(Coverage, SummaryArithmetic) {
  const Vector v = (Vector(3) << 1, 2, 3).finished();
  std::vector<CoverageTrial> trials{
      fake_trial(300, (Vector(3) << 1, 2, 4).finished(), true),
      fake_trial(300, (Vector(3) << 0, 2, 3).finished(), false),
      fake_trial(300, (Vector(3) << 1, 4, 3).finished(), true),
      fake_trial(300, (Vector(3) << 1, 2, 3).finished(), true),
      fake_trial(300, Vector(), false, "singular"),
      fake_trial(600, (Vector(3) << 9, 9, 9).finished(), false),
  };
  const auto row = summarize_coverage(trials, 300, 100, v);
  EXPECT_EQ(row.trials, 4);
  EXPECT_EQ(row.failures, 1);
  EXPECT_DOUBLE_EQ(row.coverage, 75.0);
  EXPECT_DOUBLE_EQ(row.mse, (1.0 + 1.0 + 4.0 + 0.0) / 4.0);
}

TEST(Coverage, InflatedCovarianceCoversEverything) {
  auto c = small_coverage(scratch("inflate"));
  c.inference.sigma_inflation = 100.0;
  const auto report = run_coverage_experiment(c);
  ASSERT_EQ(report.rows.size(), 1u);
  EXPECT_EQ(report.rows[0].failures, 0);
  EXPECT_EQ(report.rows[0].coverage, 100.0);
  EXPECT_EQ(report.rows[0].n, 300);
}

TEST(Coverage, AnalyticTruthMatchesClosedForm) {
  auto c = small_coverage(scratch("truth"));
  const auto truth = compute_ground_truth(c);
  const auto opt = solve_linear_env(resolve_linear_env_params(c.environment_params));
  EXPECT_EQ(truth.values, opt.values);
  EXPECT_EQ(truth.method, "analytic");
}

TEST(Coverage, ReportsAreByteIdenticalAcrossRunsAndThreadCounts) {
  const auto dir = scratch("bytes");
  auto c = small_coverage(dir);
  const auto paths = write_coverage_report(run_coverage_experiment(c), c);
  std::vector<std::string> first;
  for (const auto& p : paths) first.push_back(slurp(p));
  const auto again = write_coverage_report(run_coverage_experiment(c), c);
  ASSERT_EQ(again.size(), paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) EXPECT_EQ(slurp(again[i]), first[i]) << paths[i];

  auto threaded = c;
  threaded.threads = 3;
  threaded.output_dir = (dir / "threaded").string();
  const auto third = write_coverage_report(run_coverage_experiment(threaded), threaded);
  for (std::size_t i = 0; i < paths.size(); ++i) EXPECT_EQ(data_lines(third[i]), data_lines(paths[i]));
}

TEST(Qq, SingleValueUsesTheMedian) {
  const auto r = qq_from_d2({4.2}, 3);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].theoretical, chi2_quantile(3, 0.5));
  EXPECT_EQ(r.rows[0].empirical, 4.2);
}

TEST(Qq, RowsAreSortedWithMidpointQuantiles) {
  const auto r = qq_from_d2({5.0, 1.0, 3.0, 2.0}, 2);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(r.rows[i].index, i + 1);
    EXPECT_NEAR(r.rows[i].theoretical, -2.0 * std::log(1.0 - (i + 0.5) / 4.0), 1e-9);
  }
  EXPECT_EQ(r.rows[0].empirical, 1.0);
  EXPECT_EQ(r.rows[3].empirical, 5.0);
}

TEST(Benchmark, SingleTrialHasNoStandardError) {
  auto c = small_benchmark("glucose");
  const auto report = run_policy_benchmark(c);
  for (const std::string method : {"cyclefqi", "flattened-fqi", "random"}) {
    const auto& row = report.row(20, "all", method);
    EXPECT_EQ(row.trials, 1);
    EXPECT_FALSE(row.std_error_available);
    EXPECT_TRUE(std::isnan(row.std_error));
  }
  c.output_dir = scratch("bench1").string();
  const auto paths = write_benchmark_report(report, c);
  const auto rows = read_csv(paths.at(0));
  ASSERT_GE(rows.size(), 2u);
  const auto& header = rows[0];
  const auto col = std::find(header.begin(), header.end(), "std_error_flag") - header.begin();
  EXPECT_EQ(rows[1][col], "absent: fewer than 2 trials");
}

TEST(Benchmark, ZeroRewardGivesZeroForEveryMethod) {
  auto c = small_benchmark("glucose-zero-reward");
  c.trials = 2;
  const auto report = run_policy_benchmark(c);
  for (const auto& row : report.rows) {
    EXPECT_EQ(row.mean, 0.0) << row.method;
    EXPECT_EQ(row.failures, 0);
  }
  EXPECT_EQ(report.rows.size(), 3 * c.update_sets.size());
}

TEST(Benchmark, CommonRandomNumbers) {
  const auto spec = make_glucose_env();
  const auto pi = PolicyVector::uniform(spec);
  EXPECT_EQ(evaluate_total_reward(spec, pi, 3, 2, 5), evaluate_total_reward(spec, pi, 3, 2, 5));
  EXPECT_NE(evaluate_total_reward(spec, pi, 3, 2, 5), evaluate_total_reward(spec, pi, 3, 2, 6));
}

TEST(Tune, SelectionRule) {
  EXPECT_EQ(select_tree_count({{100, -5.0}, {200, -3.0}, {300, -4.0}}), 200);
  EXPECT_EQ(select_tree_count({{300, -3.0}, {100, -3.0}, {200, -3.0}}), 100);
  EXPECT_EQ(select_tree_count({{150, 1.0}}), 150);
}

TEST(Tune, GridOfOneSelectsIt) {
  auto c = default_experiment_config(ExperimentKind::tune_forest);
  c.environment = "glucose";
  c.tune.tree_grid = {4};
  c.tune.n_per_stage = 20;
  c.tune.iterations = 2;
  c.tune.eval_trajectories = 2;
  c.tune.eval_days = 1;
  c.threads = 1;
  const auto r = run_tune_forest(c);
  EXPECT_EQ(r.selected_cyclefqi, 4);
  EXPECT_EQ(r.selected_flattened, 4);
  EXPECT_EQ(r.rows.size(), 2u);
}

TEST(Contraction, SuitePassesAndNegativeControlFails) {
  auto c = default_experiment_config(ExperimentKind::contraction_suite);
  c.contraction.pairs = 20;
  const auto good = run_contraction_suite(c);
  EXPECT_TRUE(good.all_passed());
  EXPECT_LE(good.check("h-step-contraction", "all").worst_ratio, good.check("h-step-contraction", "all").factor + 1e-10);
  c.contraction.apply_stage_discount = false;
  EXPECT_FALSE(run_contraction_suite(c).all_passed());
}

TEST(Config, JsonRoundTrip) {
  for (auto kind : {ExperimentKind::policy_benchmark, ExperimentKind::coverage, ExperimentKind::qq_diagnostic,
                    ExperimentKind::contraction_suite, ExperimentKind::tune_forest}) {
    const auto c = default_experiment_config(kind);
    const auto j = experiment_config_to_json(c);
    EXPECT_EQ(experiment_config_to_json(experiment_config_from_json(j)), j) << to_string(kind);
    EXPECT_EQ(experiment_kind_from_string(to_string(kind)), kind);
  }
}

TEST(Config, ValidationErrors) {
  auto c = default_experiment_config(ExperimentKind::coverage);
  c.folds = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = default_experiment_config(ExperimentKind::coverage);
  c.trials = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(experiment_kind_from_string("nope"), ConfigError);
}

TEST(Config, ParseUpdateSet) {
  const auto spec = make_glucose_env();
  EXPECT_EQ(parse_update_set("all", spec).members(), (std::vector<int>{0, 1, 2, 3}));
  EXPECT_TRUE(parse_update_set("none", spec).members().empty());
  EXPECT_EQ(parse_update_set("1,3", spec).members(), (std::vector<int>{0, 2}));
  EXPECT_EQ(parse_update_set("morning/night", spec).members(), (std::vector<int>{0, 3}));
  EXPECT_THROW(parse_update_set("5", spec), ConfigError);
  EXPECT_THROW(parse_update_set("brunch", spec), ConfigError);
}

TEST(Csv, FormattingAndReading) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(1.0 / 3.0), "0.3333333333");
  EXPECT_EQ(format_number(std::nan("")), "nan");
  CsvTable t({"a", "b"});
  t.row().add(1).add("x");
  t.row().add(2.5).add(true);
  const auto path = (scratch("csv") / "t.csv").string();
  fs::create_directories(fs::path(path).parent_path());
  t.write(path, nlohmann::json{{"k", 1}});
  const auto rows = read_csv(path);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(rows[1][0], "1");
  EXPECT_EQ(rows[2][0], "2.5");
  EXPECT_EQ(slurp(path).front(), '#');
}

TEST(Trials, ResultsIndependentOfThreadsAndFailuresIsolated) {
  const std::function<int(int)> body = [](int i) {
    if (i == 3) throw Error("boom");
    return i * i;
  };
  const auto a = run_trials<int>(10, 1, body);
  const auto b = run_trials<int>(10, 4, body);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(a[i].index, i);
    EXPECT_EQ(a[i].ok(), i != 3);
    EXPECT_EQ(a[i].value, b[i].value);
  }
  EXPECT_EQ(a[3].error, "boom");
}
