#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclic/core/mdp.hpp"
#include "cyclic/fqi/cyclefqi.hpp"
#include "cyclic/inference/sieve.hpp"

namespace cyclic {

/// Invalid or unresolvable experiment configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class ExperimentKind { policy_benchmark, coverage, qq_diagnostic, contraction_suite, tune_forest };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& s);

enum class GroundTruthMethod {
  /// Closed-form values (linear environment only).
  analytic,
  /// Mean discounted return over independent starts from eta_k.
  monte_carlo,
};

struct GroundTruthConfig {
  GroundTruthMethod method = GroundTruthMethod::analytic;
  int trajectories = 50000;
  int cycles = 60;
  std::uint64_t seed = 0;
};

struct TuneConfig {
  std::vector<int> tree_grid{100, 200, 300};
  int n_per_stage = 200;
  int iterations = 100;
  std::uint64_t train_seed = 0;
  std::uint64_t eval_seed = 1;
  int eval_trajectories = 100;
  int eval_days = 10;
};

struct ContractionConfig {
  int pairs = 100;
  double tolerance = 1e-10;
  /// false runs the hand-broken operator that skips gamma_k (negative control).
  bool apply_stage_discount = true;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::coverage;
  std::string environment = "linear";
  nlohmann::json environment_params = nlohmann::json::object();
  /// Samples per stage; the coverage report's n column is K times this.
  std::vector<int> n_per_stage;
  int trials = 200;
  int folds = 2;
  /// Trial t uses seed + t.
  std::uint64_t seed = 0;
  /// Benchmark evaluation rollouts of trial t use eval_seed + t.
  std::uint64_t eval_seed = 1001;
  TrainConfig train;
  /// "all", "none", stage names joined by '/', or 1-based indices joined by ','.
  std::vector<std::string> update_sets{"all"};
  std::string output_dir = "results";
  /// 0 means one per hardware thread.
  int threads = 0;
  int eval_days = 50;
  int eval_episodes = 10;
  InferenceConfig inference;
  GroundTruthConfig ground_truth;
  TuneConfig tune;
  ContractionConfig contraction;
  /// qq-diagnostic: draw D^2 straight from chi-squared(K) instead of running trials.
  bool debug_chi2_sampler = false;
  /// qq-diagnostic: reuse the d2 column of an existing coverage_trials.csv.
  std::string qq_input;

  /// Throws ConfigError.
  void validate() const;
};

ExperimentConfig default_experiment_config(ExperimentKind kind);

/// Starts from the defaults of j["experiment"] and overrides every field present.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);
ExperimentConfig load_experiment_config(const std::string& path);

UpdateSet parse_update_set(const std::string& name, const CyclicMdpSpec& spec);

}  // namespace cyclic
