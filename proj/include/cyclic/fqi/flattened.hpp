#pragma once

#include <memory>

#include "cyclic/fqi/cyclefqi.hpp"

namespace cyclic {

enum class JointActionEncoding {
  /// One regressor on [embedded state, one-hot joint action].
  one_hot_feature,
  /// One regressor per joint action on the embedded state.
  per_action_model,
};

struct FlattenedOptions {
  /// Append a K-length one-hot stage indicator (never added when K = 1).
  bool stage_indicator = true;
  JointActionEncoding action_encoding = JointActionEncoding::one_hot_feature;
};

/// Zero-padded joint state space and disjoint union of stage action sets.
class FlattenedProblem {
 public:
  FlattenedProblem(const CyclicMdpSpec& spec, FlattenedOptions options);

  /// Sum of per-stage state dimensions.
  int state_block_dim() const { return state_block_dim_; }
  /// state_block_dim plus the stage indicator, if any.
  int joint_state_dim() const { return joint_state_dim_; }
  int joint_action_count() const { return joint_action_count_; }
  int num_stages() const { return static_cast<int>(state_offsets_.size()); }
  const std::vector<int>& state_offsets() const { return state_offsets_; }
  const std::vector<int>& action_offsets() const { return action_offsets_; }
  const std::vector<int>& action_counts() const { return action_counts_; }
  const FlattenedOptions& options() const { return options_; }
  bool has_stage_indicator() const { return joint_state_dim_ > state_block_dim_; }

  /// Stage-k coordinates in block k, zeros elsewhere, then the indicator.
  Vector embed(int stage, const Vector& state) const;
  int joint_action(int stage, int action) const;
  /// Regressor input: the embedding, plus the one-hot joint action under one_hot_feature.
  int regressor_input_dim() const;
  Vector regressor_input(int stage, const Vector& state, int action) const;

 private:
  FlattenedOptions options_;
  std::vector<int> state_dims_;
  std::vector<int> state_offsets_;
  std::vector<int> action_offsets_;
  std::vector<int> action_counts_;
  int state_block_dim_ = 0;
  int joint_state_dim_ = 0;
  int joint_action_count_ = 0;
};

FlattenedProblem build_flattened_problem(const CyclicMdpSpec& spec, FlattenedOptions options = {});

/// Joint Q over the flattened domain. action_values(k, s) only exposes stage k's action block.
class JointQ : public ActionValueFunction {
 public:
  JointQ(FlattenedProblem problem, std::vector<FittedModel> models);

  Vector action_values(int stage, const Vector& state) const override;
  const FlattenedProblem& problem() const { return problem_; }
  const std::vector<FittedModel>& models() const { return models_; }

 private:
  FlattenedProblem problem_;
  std::vector<FittedModel> models_;
};

struct FlattenedFqiResult {
  std::shared_ptr<const JointQ> q;
  PolicyVector policy;
};

/// Standard FQI on the pooled, zero-padded data with every stage optimized.
FlattenedFqiResult train_flattened_fqi(const Dataset& data, const CyclicMdpSpec& spec, const TrainConfig& config,
                                       FlattenedOptions options = {}, const TargetObserver& observer = {});

/// Constrained variant: targets use T_U, and stages outside U keep their fixed policies.
FlattenedFqiResult train_flattened_fqi(const Dataset& data, const CyclicMdpSpec& spec, const UpdateSet& update_set,
                                       const PolicyVector& fixed_policies, const TrainConfig& config,
                                       FlattenedOptions options = {}, const TargetObserver& observer = {});

}  // namespace cyclic
