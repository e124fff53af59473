#pragma once

#include <string>
#include <vector>

#include "cyclic/core/tabular.hpp"
#include "cyclic/envs/registry.hpp"
#include "cyclic/experiments/config.hpp"
#include "cyclic/inference/chi2.hpp"

namespace cyclic {

// ---- coverage ------------------------------------------------------------

struct GroundTruth {
  Vector values;
  /// Zero for analytic values.
  Vector standard_errors;
  std::string method;
};

/// v* of the optimal policy of the configured linear environment.
GroundTruth compute_ground_truth(const ExperimentConfig& config);

struct CoverageTrial {
  int n = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  Vector v_hat;
  Matrix sigma_hat;
  double d2 = 0.0;
  bool covered = false;
  /// Empty on success.
  std::string error;
};

struct CoverageRow {
  int n = 0;
  int n_per_stage = 0;
  double coverage = 0.0;
  double mse = 0.0;
  /// Successful trials.
  int trials = 0;
  int failures = 0;
};

struct CoverageReport {
  GroundTruth truth;
  double threshold = 0.0;
  std::vector<CoverageRow> rows;
  std::vector<CoverageTrial> trials;
};

/// One cross-fitted inference run against a fixed v*.
CoverageTrial run_coverage_trial(const Environment& env, const ExperimentConfig& config, const Vector& v_star,
                                 int n_per_stage, int trial);

/// Aggregates the successful trials of one sample size.
CoverageRow summarize_coverage(const std::vector<CoverageTrial>& trials, int n, int n_per_stage, const Vector& v_star);

CoverageReport run_coverage_experiment(const ExperimentConfig& config);

/// Writes coverage_summary.csv and coverage_trials.csv; returns the paths.
std::vector<std::string> write_coverage_report(const CoverageReport& report, const ExperimentConfig& config);

// ---- qq diagnostic -------------------------------------------------------

struct QqRow {
  int index = 0;
  double empirical = 0.0;
  double theoretical = 0.0;
};

struct QqReport {
  int dof = 0;
  std::vector<QqRow> rows;
  KsResult ks;
};

/// Sorted D^2 against chi-squared(dof) quantiles at (i - 0.5) / T, plus KS.
QqReport qq_from_d2(std::vector<double> d2, int dof);

QqReport run_qq_diagnostic(const ExperimentConfig& config);

/// Writes qq.csv and qq_summary.csv.
std::vector<std::string> write_qq_report(const QqReport& report, const ExperimentConfig& config);

// ---- policy benchmark ----------------------------------------------------

struct BenchmarkTrial {
  int n_per_stage = 0;
  std::string update_set;
  int trial = 0;
  std::uint64_t seed = 0;
  double cyclefqi = 0.0;
  double flattened = 0.0;
  double random = 0.0;
  std::string error;
};

struct BenchmarkRow {
  int n_per_stage = 0;
  std::string update_set;
  std::string method;
  double mean = 0.0;
  /// NaN when fewer than two trials succeeded.
  double std_error = 0.0;
  bool std_error_available = false;
  int trials = 0;
  int failures = 0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  std::vector<BenchmarkTrial> trials;

  const BenchmarkRow& row(int n_per_stage, const std::string& update_set, const std::string& method) const;
};

/// Mean undiscounted reward over `episodes` rollouts of `days` cycles from eta_1.
/// Episode e uses make_rng({seed, e}) for its start and make_rng({seed, e, 1}) for its
/// dynamics, so policies evaluated with one seed share random numbers.
double evaluate_total_reward(const CyclicMdpSpec& spec, const PolicyVector& policy, int days, int episodes,
                             std::uint64_t seed);

BenchmarkReport run_policy_benchmark(const ExperimentConfig& config);

std::vector<std::string> write_benchmark_report(const BenchmarkReport& report, const ExperimentConfig& config);

// ---- contraction suite ---------------------------------------------------

struct ContractionCheck {
  std::string name;
  std::string update_set;
  bool passed = false;
  /// Largest observed violation of the bound (<= tolerance when passing).
  double worst_excess = 0.0;
  /// Largest observed ratio of output to input distance.
  double worst_ratio = 0.0;
  double factor = 0.0;
  int pairs = 0;
};

struct ContractionReport {
  std::vector<ContractionCheck> checks;
  bool all_passed() const;
  const ContractionCheck& check(const std::string& name, const std::string& update_set) const;
};

/// Default battery MDP: 3 stages, horizons (2, 1, 3), actions (2, 3, 2), width 3.
FiniteCyclicMdp contraction_test_mdp(std::uint64_t seed, std::vector<double> discounts = {0.9, 0.8, 0.95});

ContractionReport run_contraction_suite(const ExperimentConfig& config);

std::vector<std::string> write_contraction_report(const ContractionReport& report, const ExperimentConfig& config);

// ---- forest tuning -------------------------------------------------------

struct TuneRow {
  std::string method;
  int num_trees = 0;
  double mean = 0.0;
  double std_dev = 0.0;
  std::string error;
};

struct TuneReport {
  std::vector<TuneRow> rows;
  int selected_cyclefqi = 0;
  int selected_flattened = 0;
};

/// argmax of score; ties go to the smallest tree count.
int select_tree_count(const std::vector<std::pair<int, double>>& scores);

TuneReport run_tune_forest(const ExperimentConfig& config);

std::vector<std::string> write_tune_report(const TuneReport& report, const ExperimentConfig& config);

}  // namespace cyclic
