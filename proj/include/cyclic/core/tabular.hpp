#pragma once

#include <memory>

#include "cyclic/core/mdp.hpp"

namespace cyclic {

/// One stage of a finite cyclic MDP with explicit tables.
struct FiniteStage {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 1;
  double discount = 1.0;
  /// transition[a](s, s') = P_k(s' | s, a); rows must be stochastic.
  std::vector<Matrix> transition;
  /// Expected immediate reward r_k(s, a).
  Matrix reward;
  /// terminal(s, a) in {0, 1}: membership of (s, a) in T_k.
  Matrix terminal;
  /// phi_k: state index in S_k -> state index in S_{k+1}.
  std::vector<int> stage_map;
  /// eta_k over S_k.
  Vector initial;
};

struct FiniteCyclicMdp {
  std::vector<FiniteStage> stages;

  int num_stages() const { return static_cast<int>(stages.size()); }
  int next_stage(int k) const { return (k + 1) % num_stages(); }
  double cycle_discount() const;
  /// H = sum_k H_k
  int total_horizon() const;
  bool deterministic() const;
  void validate() const;
};

/// Per stage, an S_k x A_k table.
using QTables = std::vector<Matrix>;
/// Per stage, an S_k x A_k table of action probabilities.
using PolicyTables = std::vector<Matrix>;

struct BellmanOptions {
  /// Negative control for the contraction battery: drops gamma_k at stage exits.
  bool apply_stage_discount = true;
};

/// One exact application of the constrained Bellman operator T_U.
QTables apply_bellman_operator_tabular(const FiniteCyclicMdp& mdp, const QTables& q, const UpdateSet& update_set,
                                       const PolicyTables& fixed_policies, const BellmanOptions& options = {});

/// Per-stage V_k(s) under the constrained convention (max on U, expectation under pi_k elsewhere).
std::vector<Vector> constrained_state_values(const QTables& q, const UpdateSet& update_set,
                                             const PolicyTables& fixed_policies);

QTables zero_q_tables(const FiniteCyclicMdp& mdp);
double sup_distance(const QTables& a, const QTables& b);

/// Iterates T_U from Q = 0 until successive H-step iterates differ by less than tol.
QTables solve_fixed_point_tabular(const FiniteCyclicMdp& mdp, const UpdateSet& update_set,
                                  const PolicyTables& fixed_policies, double tol = 1e-13, int max_iterations = 1000000);

/// Q^pi for a full composite policy (T_U with U empty and pi as the fixed policy).
QTables evaluate_policy_tabular(const FiniteCyclicMdp& mdp, const PolicyTables& policy, double tol = 1e-13);

/// Greedy (lowest-index ties) on U, fixed elsewhere.
PolicyTables greedy_policy_tables(const QTables& q, const UpdateSet& update_set, const PolicyTables& fixed_policies);
PolicyTables uniform_policy_tables(const FiniteCyclicMdp& mdp);

/// E_{s ~ eta_k}[V_k(s)] for every k.
Vector expected_initial_values(const FiniteCyclicMdp& mdp, const QTables& q, const PolicyTables& policy);

/// Adapts a finite MDP to the generic contract. States are 1-vectors holding
/// the state index; rewards are the expected rewards.
CyclicMdpSpec to_cyclic_spec(std::shared_ptr<const FiniteCyclicMdp> mdp);

/// Wraps per-stage tables as a PolicyVector over index-valued states.
PolicyVector to_policy_vector(const PolicyTables& tables, PolicyKind kind = PolicyKind::fixed);

/// One transition per (s, a) with its expected reward and (unique) next state.
/// Requires a deterministic MDP.
Dataset exhaustive_dataset(const FiniteCyclicMdp& mdp);

struct FiniteMdpShape {
  std::vector<int> horizons;
  std::vector<int> actions;
  std::vector<double> discounts;
  /// States per within-stage layer.
  int width = 2;
  bool deterministic = false;
  /// Probability that a non-final-layer pair is terminal.
  double early_termination = 0.3;
  double reward_scale = 1.0;
};

/// Layered random finite MDP: stage k has H_k decision layers plus one exit
/// layer, so every stage terminates within its horizon.
FiniteCyclicMdp random_finite_mdp(const FiniteMdpShape& shape, Rng& rng);

}  // namespace cyclic
