#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cyclic/core/types.hpp"

namespace cyclic {

// Stage indices are 0-based in code (k = 0..K-1). The 1-based convention only
// appears in cycle_index() and in the dataset file format.

struct StageSpec {
  std::string name;
  int state_dim = 1;
  int action_count = 1;
  int horizon = 1;
  double discount = 1.0;
  double reward_max = 0.0;
  /// Dimension of the post-terminal state s' handed to the stage map.
  /// 0 means "same as state_dim".
  int exit_dim = 0;

  int effective_exit_dim() const { return exit_dim > 0 ? exit_dim : state_dim; }
  void validate() const;
};

struct StepResult {
  double reward = 0.0;
  Vector next_state;
};

/// The K-stage environment contract.
struct CyclicMdpSpec {
  std::vector<StageSpec> stages;
  /// Membership of (s, a) in the termination set of stage k.
  std::function<bool(int stage, const Vector& state, int action)> is_terminal;
  /// Deterministic map from the post-terminal state of stage k into stage k+1.
  std::function<Vector(int stage, const Vector& exit_state)> stage_transition;
  std::function<StepResult(int stage, const Vector& state, int action, Rng& rng)> step;
  std::function<Vector(int stage, Rng& rng)> sample_initial;
  /// Optional: E_{eta_k}[prod_i s_i^{p_i}] for an exponent vector p. Lets estimators
  /// replace Monte Carlo feature means by exact ones.
  std::function<double(int stage, const std::vector<int>& exponents)> initial_moment;

  int num_stages() const { return static_cast<int>(stages.size()); }
  int next_stage(int k) const { return (k + 1) % num_stages(); }
  const StageSpec& stage(int k) const;

  /// Applies the stage map and checks both dimensions.
  Vector map_to_next_stage(int k, const Vector& exit_state) const;

  void validate() const;
};

struct Transition {
  int stage = 0;
  Vector state;
  int action = 0;
  double reward = 0.0;
  Vector next_state;
  bool terminal = false;
};

struct StageDataset {
  int stage = 0;
  std::vector<Transition> transitions;
  std::size_t size() const { return transitions.size(); }
};

/// One StageDataset per stage, indexed by stage.
using Dataset = std::vector<StageDataset>;

std::size_t total_transitions(const Dataset& data);
void validate_dataset(const Dataset& data, const CyclicMdpSpec& spec);

class UpdateSet {
 public:
  UpdateSet() = default;
  static UpdateSet all(int num_stages);
  static UpdateSet none(int num_stages);
  static UpdateSet of(int num_stages, const std::vector<int>& members);

  bool contains(int k) const;
  int num_stages() const { return static_cast<int>(members_.size()); }
  std::vector<int> members() const;
  std::string to_string() const;

 private:
  std::vector<bool> members_;
};

enum class PolicyKind { greedy, fixed, uniform_random };

std::string to_string(PolicyKind kind);

using StagePolicy = std::function<Vector(const Vector& state)>;

/// Composite stationary policy (pi_1, ..., pi_K). Each stage returns a
/// probability vector over its actions.
class PolicyVector {
 public:
  PolicyVector() = default;
  explicit PolicyVector(int num_stages);

  static PolicyVector uniform(const CyclicMdpSpec& spec);

  void set(int k, PolicyKind kind, int action_count, StagePolicy policy);

  bool has(int k) const;
  PolicyKind kind(int k) const;
  int action_count(int k) const;
  int num_stages() const { return static_cast<int>(policies_.size()); }

  /// Checked: nonnegative and summing to one within 1e-12.
  Vector probabilities(int k, const Vector& state) const;

  /// Inverse-CDF draw; always consumes exactly one uniform from the stream.
  int sample_action(int k, const Vector& state, Rng& rng) const;

 private:
  std::vector<StagePolicy> policies_;
  std::vector<PolicyKind> kinds_;
  std::vector<int> action_counts_;
};

Vector point_mass(int action_count, int action);
Vector uniform_probabilities(int action_count);
void check_probabilities(const Vector& probs, int action_count);

/// argmax with ties resolved to the lowest index.
int argmax_lowest(const Vector& values);

/// Per-stage action values Q_k(s, .). Implemented by fitted Q-vectors,
/// joint flattened models and test sentinels.
class ActionValueFunction {
 public:
  virtual ~ActionValueFunction() = default;
  virtual Vector action_values(int stage, const Vector& state) const = 0;
};

/// ((m - 1) mod K) + 1 for m, K >= 1.
int cycle_index(long long m, long long K);

double cycle_discount(const CyclicMdpSpec& spec);
double cycle_discount(const std::vector<double>& discounts);

/// (1 / (1 - gamma_cycle)) * sum_j H_j R_max,j
double value_upper_bound(const CyclicMdpSpec& spec);

/// max_a q[a] for k in U, sum_a pi(a) q[a] otherwise.
double constrained_state_value(const Vector& q_values, int k, const UpdateSet& update_set,
                               const std::optional<Vector>& fixed_policy_probs);

/// Same as above, looking the fixed policy up in a PolicyVector at `state`.
double constrained_state_value(const ActionValueFunction& q, int k, const Vector& state,
                               const UpdateSet& update_set, const PolicyVector& fixed_policies);

/// Regression target r + V_k(s') (non-terminal) or r + gamma_k V_{k+1}(phi_k(s')) (terminal).
double bellman_target(const Transition& tr, const ActionValueFunction& q, const CyclicMdpSpec& spec,
                      const UpdateSet& update_set, const PolicyVector& fixed_policies);

}  // namespace cyclic
