#include "cyclic/core/mdp.hpp"

#include <cmath>
#include <sstream>

namespace cyclic {

Rng make_rng(std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words;
  words.reserve(keys.size() * 2);
  for (auto key : keys) {
    words.push_back(static_cast<std::uint32_t>(key & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(key >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

void StageSpec::validate() const {
  require(state_dim >= 1, "stage '" + name + "': state_dim must be >= 1");
  require(action_count >= 1, "stage '" + name + "': action_count must be >= 1");
  require(horizon >= 1, "stage '" + name + "': horizon must be >= 1");
  require(discount >= 0.0 && discount <= 1.0, "stage '" + name + "': discount must lie in [0, 1]");
  require(reward_max >= 0.0, "stage '" + name + "': reward_max must be nonnegative");
  require(exit_dim >= 0, "stage '" + name + "': exit_dim must be nonnegative");
}

const StageSpec& CyclicMdpSpec::stage(int k) const {
  require(k >= 0 && k < num_stages(), "stage index " + std::to_string(k) + " out of range");
  return stages[static_cast<std::size_t>(k)];
}

Vector CyclicMdpSpec::map_to_next_stage(int k, const Vector& exit_state) const {
  require(exit_state.size() == stage(k).effective_exit_dim(),
          "stage " + std::to_string(k) + ": exit state has dimension " + std::to_string(exit_state.size()) +
              ", expected " + std::to_string(stage(k).effective_exit_dim()));
  Vector mapped = stage_transition(k, exit_state);
  const int expected = stage(next_stage(k)).state_dim;
  require(mapped.size() == expected, "stage map of stage " + std::to_string(k) + " produced dimension " +
                                         std::to_string(mapped.size()) + ", stage " +
                                         std::to_string(next_stage(k)) + " expects " + std::to_string(expected));
  return mapped;
}

void CyclicMdpSpec::validate() const {
  require(!stages.empty(), "a cyclic MDP needs at least one stage");
  for (const auto& s : stages) s.validate();
  bool any_discounted = false;
  for (const auto& s : stages) any_discounted = any_discounted || s.discount < 1.0;
  require(any_discounted, "at least one stage discount must be < 1 (otherwise returns are unbounded)");
  require(static_cast<bool>(is_terminal) && static_cast<bool>(stage_transition) && static_cast<bool>(step),
          "environment callbacks (is_terminal, stage_transition, step) must be set");
}

std::size_t total_transitions(const Dataset& data) {
  std::size_t n = 0;
  for (const auto& d : data) n += d.size();
  return n;
}

void validate_dataset(const Dataset& data, const CyclicMdpSpec& spec) {
  require(static_cast<int>(data.size()) == spec.num_stages(),
          "dataset has " + std::to_string(data.size()) + " stages, environment has " +
              std::to_string(spec.num_stages()));
  for (int k = 0; k < spec.num_stages(); ++k) {
    const auto& stage = spec.stage(k);
    const auto& d = data[static_cast<std::size_t>(k)];
    require(d.stage == k, "stage dataset " + std::to_string(k) + " is labelled " + std::to_string(d.stage));
    for (const auto& tr : d.transitions) {
      require(tr.stage == k, "transition labelled with the wrong stage");
      require(tr.state.size() == stage.state_dim, "transition state dimension mismatch at stage " + std::to_string(k));
      require(tr.action >= 0 && tr.action < stage.action_count,
              "transition action out of range at stage " + std::to_string(k));
      const auto expected_next = tr.terminal ? stage.effective_exit_dim() : stage.state_dim;
      require(tr.next_state.size() == expected_next,
              "transition next_state dimension mismatch at stage " + std::to_string(k));
    }
  }
}

UpdateSet UpdateSet::all(int num_stages) {
  UpdateSet u;
  u.members_.assign(static_cast<std::size_t>(num_stages), true);
  return u;
}

UpdateSet UpdateSet::none(int num_stages) {
  UpdateSet u;
  u.members_.assign(static_cast<std::size_t>(num_stages), false);
  return u;
}

UpdateSet UpdateSet::of(int num_stages, const std::vector<int>& members) {
  auto u = none(num_stages);
  for (int k : members) {
    require(k >= 0 && k < num_stages, "update set member " + std::to_string(k) + " is not a valid stage");
    u.members_[static_cast<std::size_t>(k)] = true;
  }
  return u;
}

bool UpdateSet::contains(int k) const {
  require(k >= 0 && k < num_stages(), "update set queried with invalid stage " + std::to_string(k));
  return members_[static_cast<std::size_t>(k)];
}

std::vector<int> UpdateSet::members() const {
  std::vector<int> out;
  for (int k = 0; k < num_stages(); ++k)
    if (members_[static_cast<std::size_t>(k)]) out.push_back(k);
  return out;
}

std::string UpdateSet::to_string() const {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (int k : members()) {
    os << (first ? "" : ",") << k;
    first = false;
  }
  os << '}';
  return os.str();
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::greedy: return "greedy";
    case PolicyKind::fixed: return "fixed";
    case PolicyKind::uniform_random: return "uniform-random";
  }
  return "unknown";
}

PolicyVector::PolicyVector(int num_stages)
    : policies_(static_cast<std::size_t>(num_stages)),
      kinds_(static_cast<std::size_t>(num_stages), PolicyKind::fixed),
      action_counts_(static_cast<std::size_t>(num_stages), 0) {}

PolicyVector PolicyVector::uniform(const CyclicMdpSpec& spec) {
  PolicyVector p(spec.num_stages());
  for (int k = 0; k < spec.num_stages(); ++k) {
    const int a = spec.stage(k).action_count;
    p.set(k, PolicyKind::uniform_random, a, [a](const Vector&) { return uniform_probabilities(a); });
  }
  return p;
}

void PolicyVector::set(int k, PolicyKind kind, int action_count, StagePolicy policy) {
  require(k >= 0 && k < num_stages(), "policy stage index out of range");
  require(action_count >= 1, "policy action count must be >= 1");
  const auto i = static_cast<std::size_t>(k);
  policies_[i] = std::move(policy);
  kinds_[i] = kind;
  action_counts_[i] = action_count;
}

bool PolicyVector::has(int k) const {
  return k >= 0 && k < num_stages() && static_cast<bool>(policies_[static_cast<std::size_t>(k)]);
}

PolicyKind PolicyVector::kind(int k) const {
  require(has(k), "no policy defined for stage " + std::to_string(k));
  return kinds_[static_cast<std::size_t>(k)];
}

int PolicyVector::action_count(int k) const {
  require(has(k), "no policy defined for stage " + std::to_string(k));
  return action_counts_[static_cast<std::size_t>(k)];
}

Vector PolicyVector::probabilities(int k, const Vector& state) const {
  require(has(k), "no policy defined for stage " + std::to_string(k));
  Vector probs = policies_[static_cast<std::size_t>(k)](state);
  check_probabilities(probs, action_counts_[static_cast<std::size_t>(k)]);
  return probs;
}

int PolicyVector::sample_action(int k, const Vector& state, Rng& rng) const {
  const Vector probs = probabilities(k, state);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cumulative = 0.0;
  int last_positive = 0;
  for (Eigen::Index a = 0; a < probs.size(); ++a) {
    if (probs[a] <= 0.0) continue;
    last_positive = static_cast<int>(a);
    cumulative += probs[a];
    if (u < cumulative) return static_cast<int>(a);
  }
  return last_positive;
}

Vector point_mass(int action_count, int action) {
  require(action >= 0 && action < action_count, "point mass action out of range");
  Vector p = Vector::Zero(action_count);
  p[action] = 1.0;
  return p;
}

Vector uniform_probabilities(int action_count) {
  require(action_count >= 1, "uniform policy needs at least one action");
  return Vector::Constant(action_count, 1.0 / action_count);
}

void check_probabilities(const Vector& probs, int action_count) {
  require(probs.size() == action_count, "policy returned " + std::to_string(probs.size()) +
                                            " probabilities for " + std::to_string(action_count) + " actions");
  require((probs.array() >= 0.0).all(), "policy returned a negative probability");
  require(std::abs(probs.sum() - 1.0) <= 1e-12, "policy probabilities do not sum to one");
}

int argmax_lowest(const Vector& values) {
  require(values.size() >= 1, "argmax of an empty vector");
  int best = 0;
  for (Eigen::Index a = 1; a < values.size(); ++a)
    if (values[a] > values[best]) best = static_cast<int>(a);
  return best;
}

int cycle_index(long long m, long long K) {
  require(m >= 1, "cycle_index: m must be >= 1");
  require(K >= 1, "cycle_index: K must be >= 1");
  return static_cast<int>(((m - 1) % K) + 1);
}

double cycle_discount(const std::vector<double>& discounts) {
  require(!discounts.empty(), "cycle_discount: no stages");
  double product = 1.0;
  bool any_below_one = false;
  for (double g : discounts) {
    require(g >= 0.0 && g <= 1.0, "cycle_discount: discount outside [0, 1]");
    product *= g;
    any_below_one = any_below_one || g < 1.0;
  }
  require(any_below_one, "cycle_discount: all stage discounts are 1, returns are unbounded");
  return product;
}

double cycle_discount(const CyclicMdpSpec& spec) {
  std::vector<double> g;
  for (const auto& s : spec.stages) g.push_back(s.discount);
  return cycle_discount(g);
}

double value_upper_bound(const CyclicMdpSpec& spec) {
  const double gc = cycle_discount(spec);
  double per_cycle = 0.0;
  for (const auto& s : spec.stages) per_cycle += s.horizon * s.reward_max;
  return per_cycle / (1.0 - gc);
}

double constrained_state_value(const Vector& q_values, int k, const UpdateSet& update_set,
                               const std::optional<Vector>& fixed_policy_probs) {
  require(q_values.size() >= 1, "constrained_state_value: empty action-value vector");
  if (update_set.contains(k)) return q_values.maxCoeff();
  require(fixed_policy_probs.has_value(),
          "stage " + std::to_string(k) + " is outside the update set but has no fixed policy");
  check_probabilities(*fixed_policy_probs, static_cast<int>(q_values.size()));
  return fixed_policy_probs->dot(q_values);
}

double constrained_state_value(const ActionValueFunction& q, int k, const Vector& state,
                               const UpdateSet& update_set, const PolicyVector& fixed_policies) {
  const Vector values = q.action_values(k, state);
  if (update_set.contains(k)) return values.maxCoeff();
  require(fixed_policies.has(k), "stage " + std::to_string(k) + " is outside the update set but has no fixed policy");
  return constrained_state_value(values, k, update_set, fixed_policies.probabilities(k, state));
}

double bellman_target(const Transition& tr, const ActionValueFunction& q, const CyclicMdpSpec& spec,
                      const UpdateSet& update_set, const PolicyVector& fixed_policies) {
  const int k = tr.stage;
  if (!tr.terminal) return tr.reward + constrained_state_value(q, k, tr.next_state, update_set, fixed_policies);
  const double gamma = spec.stage(k).discount;
  if (gamma == 0.0) return tr.reward;
  const int next = spec.next_stage(k);
  const Vector mapped = spec.map_to_next_stage(k, tr.next_state);
  return tr.reward + gamma * constrained_state_value(q, next, mapped, update_set, fixed_policies);
}

}  // namespace cyclic
