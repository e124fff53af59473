#include "cyclic/fqi/flattened.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

namespace cyclic {

FlattenedProblem::FlattenedProblem(const CyclicMdpSpec& spec, FlattenedOptions options) : options_(options) {
  require(spec.num_stages() >= 1, "flattening needs at least one stage");
  for (const auto& s : spec.stages) {
    state_offsets_.push_back(state_block_dim_);
    state_dims_.push_back(s.state_dim);
    state_block_dim_ += s.state_dim;
    action_offsets_.push_back(joint_action_count_);
    action_counts_.push_back(s.action_count);
    joint_action_count_ += s.action_count;
  }
  joint_state_dim_ = state_block_dim_ + (options_.stage_indicator && spec.num_stages() > 1 ? spec.num_stages() : 0);
}

FlattenedProblem build_flattened_problem(const CyclicMdpSpec& spec, FlattenedOptions options) {
  return FlattenedProblem(spec, options);
}

Vector FlattenedProblem::embed(int stage, const Vector& state) const {
  require(stage >= 0 && stage < num_stages(), "flattened embedding: stage out of range");
  const auto k = static_cast<std::size_t>(stage);
  require(state.size() == state_dims_[k], "flattened embedding: state dimension mismatch");
  Vector out = Vector::Zero(joint_state_dim_);
  out.segment(state_offsets_[k], state_dims_[k]) = state;
  if (has_stage_indicator()) out[state_block_dim_ + stage] = 1.0;
  return out;
}

int FlattenedProblem::joint_action(int stage, int action) const {
  require(stage >= 0 && stage < num_stages(), "flattened action: stage out of range");
  const auto k = static_cast<std::size_t>(stage);
  require(action >= 0 && action < action_counts_[k], "flattened action: action out of range");
  return action_offsets_[k] + action;
}

int FlattenedProblem::regressor_input_dim() const {
  return joint_state_dim_ +
         (options_.action_encoding == JointActionEncoding::one_hot_feature ? joint_action_count_ : 0);
}

Vector FlattenedProblem::regressor_input(int stage, const Vector& state, int action) const {
  if (options_.action_encoding == JointActionEncoding::per_action_model) return embed(stage, state);
  Vector out = Vector::Zero(regressor_input_dim());
  out.head(joint_state_dim_) = embed(stage, state);
  out[joint_state_dim_ + joint_action(stage, action)] = 1.0;
  return out;
}

JointQ::JointQ(FlattenedProblem problem, std::vector<FittedModel> models)
    : problem_(std::move(problem)), models_(std::move(models)) {
  const auto expected = problem_.options().action_encoding == JointActionEncoding::one_hot_feature
                            ? std::size_t{1}
                            : static_cast<std::size_t>(problem_.joint_action_count());
  require(models_.size() == expected, "joint Q: wrong number of models for the action encoding");
}

Vector JointQ::action_values(int stage, const Vector& state) const {
  const int A = problem_.action_counts().at(static_cast<std::size_t>(stage));
  Vector q(A);
  if (problem_.options().action_encoding == JointActionEncoding::one_hot_feature) {
    Vector input = problem_.regressor_input(stage, state, 0);
    const int base = problem_.joint_state_dim();
    for (int a = 0; a < A; ++a) {
      input.tail(problem_.joint_action_count()).setZero();
      input[base + problem_.joint_action(stage, a)] = 1.0;
      q[a] = models_.front().predict(input);
    }
  } else {
    const Vector input = problem_.embed(stage, state);
    for (int a = 0; a < A; ++a)
      q[a] = models_[static_cast<std::size_t>(problem_.joint_action(stage, a))].predict(input);
  }
  return q;
}

namespace {

// Key for the pooled single-model fit; distinct from any (stage, action) key.
constexpr std::uint64_t kPooledFitKey = 0xF1A77E4EDull;

}  // namespace

FlattenedFqiResult train_flattened_fqi(const Dataset& data, const CyclicMdpSpec& spec, const TrainConfig& config,
                                       FlattenedOptions options, const TargetObserver& observer) {
  return train_flattened_fqi(data, spec, UpdateSet::all(spec.num_stages()), PolicyVector(spec.num_stages()), config,
                             options, observer);
}

FlattenedFqiResult train_flattened_fqi(const Dataset& data, const CyclicMdpSpec& spec, const UpdateSet& update_set,
                                       const PolicyVector& fixed_policies, const TrainConfig& config,
                                       FlattenedOptions options, const TargetObserver& observer) {
  spec.validate();
  config.validate();
  validate_dataset(data, spec);
  const int K = spec.num_stages();
  for (int k = 0; k < K; ++k)
    require(!data[static_cast<std::size_t>(k)].transitions.empty(),
            "no transitions for stage " + std::to_string(k) + "; every stage's Q-function is referenced by targets");
  require(update_set.num_stages() == K, "update set does not match the environment's K");
  for (int k = 0; k < K; ++k)
    if (!update_set.contains(k))
      require(fixed_policies.has(k), "stage " + std::to_string(k) + " is outside the update set but has no fixed policy");

  FlattenedProblem problem(spec, options);
  const double clip = config.clip_targets ? value_upper_bound(spec) : 0.0;
  const bool pooled = options.action_encoding == JointActionEncoding::one_hot_feature;
  const int J = problem.joint_action_count();
  const RegressorSpec regressor = regressor_for_input_dim(config.regressor, problem.regressor_input_dim());

  // Pooled design (one row per transition, stage-then-index order) or one slice per joint action.
  Matrix pooled_inputs;
  std::vector<std::pair<int, std::size_t>> order;
  std::vector<std::vector<std::pair<int, std::size_t>>> per_action(static_cast<std::size_t>(J));
  for (int k = 0; k < K; ++k)
    for (std::size_t i = 0; i < data[static_cast<std::size_t>(k)].size(); ++i) {
      order.emplace_back(k, i);
      const auto& tr = data[static_cast<std::size_t>(k)].transitions[i];
      per_action[static_cast<std::size_t>(problem.joint_action(k, tr.action))].emplace_back(k, i);
    }
  std::vector<Matrix> action_inputs(static_cast<std::size_t>(J));
  if (pooled) {
    pooled_inputs.resize(static_cast<Eigen::Index>(order.size()), problem.regressor_input_dim());
    for (std::size_t r = 0; r < order.size(); ++r) {
      const auto& tr = data[static_cast<std::size_t>(order[r].first)].transitions[order[r].second];
      pooled_inputs.row(static_cast<Eigen::Index>(r)) = problem.regressor_input(tr.stage, tr.state, tr.action).transpose();
    }
  } else {
    for (int j = 0; j < J; ++j) {
      const auto& rows = per_action[static_cast<std::size_t>(j)];
      auto& x = action_inputs[static_cast<std::size_t>(j)];
      x.resize(static_cast<Eigen::Index>(rows.size()), problem.joint_state_dim());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& tr = data[static_cast<std::size_t>(rows[r].first)].transitions[rows[r].second];
        x.row(static_cast<Eigen::Index>(r)) = problem.embed(tr.stage, tr.state).transpose();
      }
      if (rows.empty()) spdlog::warn("joint action {} has no samples; its Q-function stays at 0", j);
    }
  }

  std::vector<FittedModel> initial;
  if (pooled)
    initial.push_back(FittedModel::constant(0.0, problem.regressor_input_dim()));
  else
    initial.assign(static_cast<std::size_t>(J), FittedModel::constant(0.0, problem.joint_state_dim()));
  auto q = std::make_shared<const JointQ>(problem, std::move(initial));

  std::vector<Vector> targets(static_cast<std::size_t>(K));
  for (int m = 1; m <= config.iterations; ++m) {
    for (int k = 0; k < K; ++k) {
      const auto& trs = data[static_cast<std::size_t>(k)].transitions;
      Vector& y = targets[static_cast<std::size_t>(k)];
      y.resize(static_cast<Eigen::Index>(trs.size()));
      for (std::size_t i = 0; i < trs.size(); ++i) {
        double t = bellman_target(trs[i], *q, spec, update_set, fixed_policies);
        if (config.clip_targets) t = std::clamp(t, -clip, clip);
        y[static_cast<Eigen::Index>(i)] = t;
      }
      if (observer) observer(m, k, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), *q);
    }

    std::vector<FittedModel> models;
    try {
      if (pooled) {
        Vector y(static_cast<Eigen::Index>(order.size()));
        for (std::size_t r = 0; r < order.size(); ++r)
          y[static_cast<Eigen::Index>(r)] =
              targets[static_cast<std::size_t>(order[r].first)][static_cast<Eigen::Index>(order[r].second)];
        Rng rng = make_rng({config.seed, static_cast<std::uint64_t>(m), kPooledFitKey});
        models.push_back(fit(regressor, pooled_inputs, y, rng));
      } else {
        for (int k = 0; k < K; ++k)
          for (int a = 0; a < spec.stage(k).action_count; ++a) {
            const int j = problem.joint_action(k, a);
            const auto& rows = per_action[static_cast<std::size_t>(j)];
            if (rows.empty()) {
              models.push_back(FittedModel::constant(0.0, problem.joint_state_dim()));
              continue;
            }
            Vector y(static_cast<Eigen::Index>(rows.size()));
            for (std::size_t r = 0; r < rows.size(); ++r)
              y[static_cast<Eigen::Index>(r)] =
                  targets[static_cast<std::size_t>(rows[r].first)][static_cast<Eigen::Index>(rows[r].second)];
            // Same stream keys as CycleFQI so that K = 1 reproduces it exactly.
            Rng rng = make_rng({config.seed, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(k),
                                static_cast<std::uint64_t>(a)});
            models.push_back(fit(regressor, action_inputs[static_cast<std::size_t>(j)], y, rng));
          }
      }
    } catch (const Error& e) {
      throw Error("flattened FQI iteration " + std::to_string(m) + ": " + e.what());
    }
    q = std::make_shared<const JointQ>(problem, std::move(models));
  }
  PolicyVector policy(K);
  for (int k = 0; k < K; ++k) {
    const int A = spec.stage(k).action_count;
    if (update_set.contains(k)) {
      policy.set(k, PolicyKind::greedy, A,
                 [q, k, A](const Vector& s) { return point_mass(A, argmax_lowest(q->action_values(k, s))); });
    } else {
      const PolicyVector fixed = fixed_policies;
      policy.set(k, fixed.kind(k), A, [fixed, k](const Vector& s) { return fixed.probabilities(k, s); });
    }
  }
  return FlattenedFqiResult{q, std::move(policy)};
}

}  // namespace cyclic
