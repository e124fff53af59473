#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclic/core/mdp.hpp"
#include "cyclic/envs/linear_env.hpp"

namespace cyclic {

enum class SamplingScheme {
  /// s ~ eta_k, a ~ behavior, one step; repeated n times per stage.
  independent,
  /// Multi-day trajectories from eta_1 under the behavior policy, harvested until each stage is full.
  trajectories,
};

struct SamplingConfig {
  SamplingScheme scheme = SamplingScheme::independent;
  int days_per_trajectory = 5;
};

Dataset sample_offline_dataset(const CyclicMdpSpec& spec, const PolicyVector& behavior, int n_per_stage,
                               const SamplingConfig& sampling, Rng& rng);

struct Environment {
  std::string name;
  CyclicMdpSpec spec;
  SamplingConfig sampling;
  /// Active parameterization, including every default that is a modelling choice.
  nlohmann::json description;
};

/// Known names: "linear", "glucose", "glucose-zero-reward". `params` overrides configuration fields.
Environment make_environment(const std::string& name, const nlohmann::json& params = nlohmann::json::object());
std::vector<std::string> environment_names();

/// Linear-environment coefficients for a "linear" params object: explicit
/// "stages", or drawn from "seed" / "discount" / "noise_sd".
LinearEnvParams resolve_linear_env_params(const nlohmann::json& params);

}  // namespace cyclic
