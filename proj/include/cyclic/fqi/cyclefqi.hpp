#pragma once

#include <functional>
#include <memory>
#include <span>

#include <nlohmann/json_fwd.hpp>

#include "cyclic/core/mdp.hpp"
#include "cyclic/regressors/regressor.hpp"

namespace cyclic {

enum class StageModel {
  /// One regressor per (stage, action) on the stage state.
  per_action,
  /// One regressor per stage on [state, one-hot action].
  per_stage,
};

std::string to_string(StageModel m);
StageModel stage_model_from_string(const std::string& s);

/// [state, e_action] for the per-stage layout.
Vector stage_model_input(const Vector& state, int action, int action_count);

/// Stage-specific Q-functions.
class QVector : public ActionValueFunction {
 public:
  /// Per-action layout: models[k][a].
  QVector(std::vector<std::vector<FittedModel>> models, UpdateSet update_set, PolicyVector fixed_policies);
  /// Per-stage layout: one model per stage over stage_model_input.
  QVector(std::vector<FittedModel> stage_models, std::vector<int> action_counts, UpdateSet update_set,
          PolicyVector fixed_policies);

  /// Q identically zero.
  static QVector zeros(const CyclicMdpSpec& spec, UpdateSet update_set, PolicyVector fixed_policies);

  Vector action_values(int stage, const Vector& state) const override;

  /// Under the per-stage layout every action shares the stage model.
  const FittedModel& model(int stage, int action) const;
  StageModel stage_model() const { return layout_; }
  int num_stages() const { return static_cast<int>(models_.size()); }
  int action_count(int stage) const;
  const UpdateSet& update_set() const { return update_set_; }
  const PolicyVector& fixed_policies() const { return fixed_policies_; }

 private:
  std::vector<std::vector<FittedModel>> models_;
  std::vector<int> action_counts_;
  StageModel layout_ = StageModel::per_action;
  UpdateSet update_set_;
  PolicyVector fixed_policies_;
};

struct TrainConfig {
  int iterations = 100;
  RegressorSpec regressor = RandomForestSpec{};
  /// Clamp targets to [-Y, Y]; only meaningful for nonnegative rewards.
  bool clip_targets = false;
  std::uint64_t seed = 0;
  StageModel stage_model = StageModel::per_action;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Adapts a regressor template to a stage's input dimension (sets the basis
/// input_dim of a linear sieve; other kinds pass through).
RegressorSpec regressor_for_input_dim(const RegressorSpec& spec, int input_dim);

/// Called once per (iteration, stage) with the targets computed from the
/// previous iterate, before any stage is refit.
using TargetObserver =
    std::function<void(int iteration, int stage, std::span<const double> targets, const ActionValueFunction& previous)>;

struct CycleFqiResult {
  std::shared_ptr<const QVector> q;
  PolicyVector policy;
};

/// Cyclic fitted Q-iteration with Q^(0) = 0 and synchronous updates.
CycleFqiResult train_cyclefqi(const Dataset& data, const CyclicMdpSpec& spec, const UpdateSet& update_set,
                              const PolicyVector& fixed_policies, const TrainConfig& config,
                              const TargetObserver& observer = {});

/// Point mass on argmax_a Q_k(s, a) (lowest index on ties) for k in U; the fixed policy otherwise.
PolicyVector greedy_policy(std::shared_ptr<const QVector> q);

/// Greedy policy over any action-value function, every stage optimized.
PolicyVector greedy_policy(std::shared_ptr<const ActionValueFunction> q, const CyclicMdpSpec& spec);

/// Checkpoint: manifest (K, update set, config) plus every model. Fixed
/// policies are recorded by kind; only uniform-random ones can be restored.
nlohmann::json qvector_to_json(const QVector& q, const TrainConfig& config);
QVector qvector_from_json(const nlohmann::json& j);

}  // namespace cyclic
