#include "cyclic/core/rollout.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

namespace cyclic {

EpisodeSummary simulate(const CyclicMdpSpec& spec, const PolicyVector& policy, int start_stage,
                        const Vector& start_state, int num_cycles, Rng& rng) {
  require(num_cycles >= 1, "rollout: num_cycles must be >= 1");
  const int K = spec.num_stages();
  require(start_stage >= 0 && start_stage < K, "rollout: start stage out of range");
  require(start_state.size() == spec.stage(start_stage).state_dim,
          "rollout: start state has dimension " + std::to_string(start_state.size()) + ", stage expects " +
              std::to_string(spec.stage(start_stage).state_dim));

  EpisodeSummary out;
  double cumulative_discount = 1.0;
  int k = start_stage;
  Vector state = start_state;
  const long long visits = static_cast<long long>(num_cycles) * K;
  for (long long m = 0; m < visits; ++m) {
    const auto& stage = spec.stage(k);
    double stage_reward = 0.0;
    Vector exit_state;
    for (int t = 1;; ++t) {
      const int action = policy.sample_action(k, state, rng);
      const bool terminal = spec.is_terminal(k, state, action);
      StepResult step = spec.step(k, state, action, rng);
      stage_reward += step.reward;
      ++out.decisions;
      if (terminal || t >= stage.horizon) {
        if (!terminal) {
          ++out.forced_terminations;
          spdlog::warn("stage '{}' did not terminate within its horizon H={}; forcing termination", stage.name,
                       stage.horizon);
        }
        exit_state = std::move(step.next_state);
        break;
      }
      require(step.next_state.size() == stage.state_dim, "rollout: step returned a state of the wrong dimension");
      state = std::move(step.next_state);
    }
    out.discounted_return += cumulative_discount * stage_reward;
    out.total_reward += stage_reward;
    cumulative_discount *= stage.discount;
    state = spec.map_to_next_stage(k, exit_state);
    k = spec.next_stage(k);
  }
  return out;
}

double rollout(const CyclicMdpSpec& spec, const PolicyVector& policy, int start_stage, const Vector& start_state,
               int num_cycles, Rng& rng) {
  return simulate(spec, policy, start_stage, start_state, num_cycles, rng).discounted_return;
}

MonteCarloEstimate monte_carlo_estimate(const CyclicMdpSpec& spec, const PolicyVector& policy, int stage,
                                        int num_trajectories, int num_cycles, Rng& rng) {
  require(num_trajectories >= 1, "monte_carlo_value: need at least one trajectory");
  require(static_cast<bool>(spec.sample_initial), "monte_carlo_value: environment has no initial sampler");
  // Welford accumulation.
  double mean = 0.0;
  double m2 = 0.0;
  for (int i = 0; i < num_trajectories; ++i) {
    const Vector start = spec.sample_initial(stage, rng);
    const double g = rollout(spec, policy, stage, start, num_cycles, rng);
    const double delta = g - mean;
    mean += delta / (i + 1);
    m2 += delta * (g - mean);
  }
  MonteCarloEstimate est;
  est.mean = mean;
  if (num_trajectories > 1) est.standard_error = std::sqrt(m2 / (num_trajectories - 1.0) / num_trajectories);
  return est;
}

double monte_carlo_value(const CyclicMdpSpec& spec, const PolicyVector& policy, int stage, int num_trajectories,
                         int num_cycles, Rng& rng) {
  return monte_carlo_estimate(spec, policy, stage, num_trajectories, num_cycles, rng).mean;
}

}  // namespace cyclic
