#pragma once

#include "cyclic/core/mdp.hpp"

namespace cyclic {

struct EpisodeSummary {
  /// sum_m Gamma_{k,m} R_m
  double discounted_return = 0.0;
  /// Undiscounted sum of every reward collected.
  double total_reward = 0.0;
  int decisions = 0;
  /// Stages that hit their horizon without signalling termination.
  int forced_terminations = 0;
};

/// Simulates num_cycles full cycles starting in start_stage. Rewards inside a
/// stage are undiscounted; gamma_k is applied when stage k exits. A stage that
/// has not terminated by step H_k is force-terminated (with a warning).
EpisodeSummary simulate(const CyclicMdpSpec& spec, const PolicyVector& policy, int start_stage,
                        const Vector& start_state, int num_cycles, Rng& rng);

double rollout(const CyclicMdpSpec& spec, const PolicyVector& policy, int start_stage, const Vector& start_state,
               int num_cycles, Rng& rng);

/// Mean discounted return over independent starts s ~ eta_k.
double monte_carlo_value(const CyclicMdpSpec& spec, const PolicyVector& policy, int stage, int num_trajectories,
                         int num_cycles, Rng& rng);

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

MonteCarloEstimate monte_carlo_estimate(const CyclicMdpSpec& spec, const PolicyVector& policy, int stage,
                                        int num_trajectories, int num_cycles, Rng& rng);

}  // namespace cyclic
