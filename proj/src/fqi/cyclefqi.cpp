#include "cyclic/fqi/cyclefqi.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace cyclic {

using nlohmann::json;

std::string to_string(StageModel m) { return m == StageModel::per_action ? "per-action" : "per-stage"; }

StageModel stage_model_from_string(const std::string& s) {
  if (s == "per-action") return StageModel::per_action;
  if (s == "per-stage") return StageModel::per_stage;
  throw Error("unknown stage model '" + s + "' (expected per-action or per-stage)");
}

Vector stage_model_input(const Vector& state, int action, int action_count) {
  Vector x = Vector::Zero(state.size() + action_count);
  x.head(state.size()) = state;
  x[state.size() + action] = 1.0;
  return x;
}

QVector::QVector(std::vector<std::vector<FittedModel>> models, UpdateSet update_set, PolicyVector fixed_policies)
    : models_(std::move(models)), update_set_(std::move(update_set)), fixed_policies_(std::move(fixed_policies)) {
  require(update_set_.num_stages() == num_stages(), "Q-vector and update set disagree on K");
  for (int k = 0; k < num_stages(); ++k) {
    require(!models_[static_cast<std::size_t>(k)].empty(), "Q-vector stage without action models");
    action_counts_.push_back(static_cast<int>(models_[static_cast<std::size_t>(k)].size()));
    if (!update_set_.contains(k))
      require(fixed_policies_.has(k), "stage " + std::to_string(k) + " is outside the update set but has no fixed policy");
  }
}

QVector::QVector(std::vector<FittedModel> stage_models, std::vector<int> action_counts, UpdateSet update_set,
                 PolicyVector fixed_policies)
    : action_counts_(std::move(action_counts)),
      layout_(StageModel::per_stage),
      update_set_(std::move(update_set)),
      fixed_policies_(std::move(fixed_policies)) {
  require(stage_models.size() == action_counts_.size(), "Q-vector: one stage model per action count");
  for (auto& m : stage_models) models_.push_back({std::move(m)});
  require(update_set_.num_stages() == num_stages(), "Q-vector and update set disagree on K");
  for (int k = 0; k < num_stages(); ++k) {
    require(action_counts_[static_cast<std::size_t>(k)] >= 1, "Q-vector stage without actions");
    if (!update_set_.contains(k))
      require(fixed_policies_.has(k), "stage " + std::to_string(k) + " is outside the update set but has no fixed policy");
  }
}

QVector QVector::zeros(const CyclicMdpSpec& spec, UpdateSet update_set, PolicyVector fixed_policies) {
  std::vector<std::vector<FittedModel>> models;
  for (const auto& s : spec.stages)
    models.emplace_back(static_cast<std::size_t>(s.action_count), FittedModel::constant(0.0, s.state_dim));
  return QVector(std::move(models), std::move(update_set), std::move(fixed_policies));
}

const FittedModel& QVector::model(int stage, int action) const {
  require(stage >= 0 && stage < num_stages(), "Q-vector stage out of range");
  require(action >= 0 && action < action_count(stage), "Q-vector action out of range");
  const auto& row = models_[static_cast<std::size_t>(stage)];
  return layout_ == StageModel::per_stage ? row.front() : row[static_cast<std::size_t>(action)];
}

int QVector::action_count(int stage) const {
  require(stage >= 0 && stage < num_stages(), "Q-vector stage out of range");
  return action_counts_[static_cast<std::size_t>(stage)];
}

Vector QVector::action_values(int stage, const Vector& state) const {
  const int A = action_count(stage);
  const auto& row = models_[static_cast<std::size_t>(stage)];
  Vector q(A);
  if (layout_ == StageModel::per_stage) {
    Vector x = stage_model_input(state, 0, A);
    for (int a = 0; a < A; ++a) {
      if (a > 0) x[state.size() + a - 1] = 0.0;
      x[state.size() + a] = 1.0;
      q[a] = row.front().predict(x);
    }
    return q;
  }
  for (int a = 0; a < A; ++a) q[a] = row[static_cast<std::size_t>(a)].predict(state);
  return q;
}

void TrainConfig::validate() const {
  require(iterations >= 1, "training needs at least one iteration");
  cyclic::validate(regressor);
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"iterations", c.iterations},
              {"regressor", regressor_spec_to_json(c.regressor)},
              {"clip_targets", c.clip_targets},
              {"seed", c.seed},
              {"stage_model", to_string(c.stage_model)}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.iterations = j.value("iterations", c.iterations);
  if (j.contains("regressor")) c.regressor = regressor_spec_from_json(j.at("regressor"));
  c.clip_targets = j.value("clip_targets", c.clip_targets);
  c.seed = j.value("seed", c.seed);
  if (j.contains("stage_model")) c.stage_model = stage_model_from_string(j.at("stage_model").get<std::string>());
  c.validate();
  return c;
}

RegressorSpec regressor_for_input_dim(const RegressorSpec& spec, int input_dim) {
  if (const auto* lin = std::get_if<LinearSieveSpec>(&spec)) {
    if (lin->basis.kind == BasisKind::tabular_indicator) return spec;
    LinearSieveSpec adapted = *lin;
    adapted.basis.input_dim = input_dim;
    return adapted;
  }
  return spec;
}

namespace {

struct ActionSlice {
  Matrix inputs;
  std::vector<std::size_t> rows;  // positions in the stage dataset
};

// Fit key for per-stage models; distinct from any action index.
constexpr std::uint64_t kStageFitKey = 0x57A6E0ull;

}  // namespace

CycleFqiResult train_cyclefqi(const Dataset& data, const CyclicMdpSpec& spec, const UpdateSet& update_set,
                              const PolicyVector& fixed_policies, const TrainConfig& config,
                              const TargetObserver& observer) {
  spec.validate();
  config.validate();
  validate_dataset(data, spec);
  const int K = spec.num_stages();
  require(update_set.num_stages() == K, "update set does not match the environment's K");
  for (int k = 0; k < K; ++k) {
    require(!data[static_cast<std::size_t>(k)].transitions.empty(),
            "no transitions for stage " + std::to_string(k) + "; every stage's Q-function is referenced by targets");
    if (!update_set.contains(k))
      require(fixed_policies.has(k), "stage " + std::to_string(k) + " is outside the update set but has no fixed policy");
  }
  const double clip = config.clip_targets ? value_upper_bound(spec) : 0.0;

  const bool per_stage = config.stage_model == StageModel::per_stage;
  std::vector<int> action_counts;
  for (const auto& st : spec.stages) action_counts.push_back(st.action_count);

  // Regression inputs never change across iterations.
  std::vector<std::vector<ActionSlice>> slices(static_cast<std::size_t>(K));
  std::vector<Matrix> stage_inputs(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto& stage = spec.stage(k);
    const auto& trs = data[static_cast<std::size_t>(k)].transitions;
    if (per_stage) {
      Matrix& x = stage_inputs[static_cast<std::size_t>(k)];
      x.resize(static_cast<Eigen::Index>(trs.size()), stage.state_dim + stage.action_count);
      for (std::size_t i = 0; i < trs.size(); ++i)
        x.row(static_cast<Eigen::Index>(i)) = stage_model_input(trs[i].state, trs[i].action, stage.action_count).transpose();
      continue;
    }
    auto& per_action = slices[static_cast<std::size_t>(k)];
    per_action.resize(static_cast<std::size_t>(stage.action_count));
    for (std::size_t i = 0; i < trs.size(); ++i) per_action[static_cast<std::size_t>(trs[i].action)].rows.push_back(i);
    for (int a = 0; a < stage.action_count; ++a) {
      auto& slice = per_action[static_cast<std::size_t>(a)];
      slice.inputs.resize(static_cast<Eigen::Index>(slice.rows.size()), stage.state_dim);
      for (std::size_t r = 0; r < slice.rows.size(); ++r)
        slice.inputs.row(static_cast<Eigen::Index>(r)) = trs[slice.rows[r]].state.transpose();
      if (slice.rows.empty())
        spdlog::warn("stage {} action {} has no samples; its Q-function stays at 0", k, a);
    }
  }

  auto q = std::make_shared<const QVector>(QVector::zeros(spec, update_set, fixed_policies));
  std::vector<Vector> targets(static_cast<std::size_t>(K));
  for (int m = 1; m <= config.iterations; ++m) {
    // Every target of iteration m is computed from Q^(m-1) before any refit.
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

    if (per_stage) {
      std::vector<FittedModel> stage_models;
      for (int k = 0; k < K; ++k) {
        const auto& stage = spec.stage(k);
        const RegressorSpec regressor = regressor_for_input_dim(config.regressor, stage.state_dim + stage.action_count);
        Rng rng = make_rng({config.seed, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(k), kStageFitKey});
        try {
          stage_models.push_back(fit(regressor, stage_inputs[static_cast<std::size_t>(k)],
                                     targets[static_cast<std::size_t>(k)], rng));
        } catch (const Error& e) {
          throw Error("CycleFQI iteration " + std::to_string(m) + ", stage " + std::to_string(k) + ": " + e.what());
        }
      }
      q = std::make_shared<const QVector>(QVector(std::move(stage_models), action_counts, update_set, fixed_policies));
      continue;
    }

    std::vector<std::vector<FittedModel>> models(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      const auto& stage = spec.stage(k);
      const RegressorSpec regressor = regressor_for_input_dim(config.regressor, stage.state_dim);
      for (int a = 0; a < stage.action_count; ++a) {
        const auto& slice = slices[static_cast<std::size_t>(k)][static_cast<std::size_t>(a)];
        if (slice.rows.empty()) {
          models[static_cast<std::size_t>(k)].push_back(FittedModel::constant(0.0, stage.state_dim));
          continue;
        }
        Vector y(static_cast<Eigen::Index>(slice.rows.size()));
        for (std::size_t r = 0; r < slice.rows.size(); ++r)
          y[static_cast<Eigen::Index>(r)] = targets[static_cast<std::size_t>(k)][static_cast<Eigen::Index>(slice.rows[r])];
        Rng rng = make_rng({config.seed, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(k),
                            static_cast<std::uint64_t>(a)});
        try {
          models[static_cast<std::size_t>(k)].push_back(fit(regressor, slice.inputs, y, rng));
        } catch (const Error& e) {
          throw Error("CycleFQI iteration " + std::to_string(m) + ", stage " + std::to_string(k) + ", action " +
                      std::to_string(a) + ": " + e.what());
        }
      }
    }
    q = std::make_shared<const QVector>(QVector(std::move(models), update_set, fixed_policies));
  }
  return CycleFqiResult{q, greedy_policy(q)};
}

PolicyVector greedy_policy(std::shared_ptr<const QVector> q) {
  require(q != nullptr, "greedy_policy: null Q-vector");
  const int K = q->num_stages();
  PolicyVector policy(K);
  for (int k = 0; k < K; ++k) {
    const int A = q->action_count(k);
    if (q->update_set().contains(k)) {
      policy.set(k, PolicyKind::greedy, A,
                 [q, k, A](const Vector& s) { return point_mass(A, argmax_lowest(q->action_values(k, s))); });
    } else {
      const PolicyVector fixed = q->fixed_policies();
      policy.set(k, fixed.kind(k), A, [fixed, k](const Vector& s) { return fixed.probabilities(k, s); });
    }
  }
  return policy;
}

PolicyVector greedy_policy(std::shared_ptr<const ActionValueFunction> q, const CyclicMdpSpec& spec) {
  require(q != nullptr, "greedy_policy: null action-value function");
  PolicyVector policy(spec.num_stages());
  for (int k = 0; k < spec.num_stages(); ++k) {
    const int A = spec.stage(k).action_count;
    policy.set(k, PolicyKind::greedy, A,
               [q, k, A](const Vector& s) { return point_mass(A, argmax_lowest(q->action_values(k, s))); });
  }
  return policy;
}

json qvector_to_json(const QVector& q, const TrainConfig& config) {
  json manifest{{"num_stages", q.num_stages()},
                {"update_set", q.update_set().members()},
                {"config", train_config_to_json(config)},
                {"seed", config.seed},
                {"stage_model", to_string(q.stage_model())}};
  json fixed = json::object();
  for (int k = 0; k < q.num_stages(); ++k)
    if (!q.update_set().contains(k)) fixed[std::to_string(k)] = to_string(q.fixed_policies().kind(k));
  manifest["fixed_policies"] = fixed;
  json stages = json::array();
  for (int k = 0; k < q.num_stages(); ++k) {
    json models = json::array();
    if (q.stage_model() == StageModel::per_stage) {
      models.push_back(q.model(k, 0).to_json());
      stages.push_back(json{{"action_count", q.action_count(k)}, {"models", models}});
      continue;
    }
    for (int a = 0; a < q.action_count(k); ++a) models.push_back(q.model(k, a).to_json());
    stages.push_back(json{{"action_count", q.action_count(k)}, {"models", models}});
  }
  return json{{"format_version", FittedModel::format_version}, {"manifest", manifest}, {"models", stages}};
}

QVector qvector_from_json(const json& j) {
  require(j.at("format_version").get<int>() == FittedModel::format_version, "unsupported checkpoint format_version");
  const auto& manifest = j.at("manifest");
  const int K = manifest.at("num_stages").get<int>();
  const auto update_set = UpdateSet::of(K, manifest.at("update_set").get<std::vector<int>>());
  const auto layout = stage_model_from_string(manifest.value("stage_model", std::string("per-action")));
  std::vector<std::vector<FittedModel>> models;
  std::vector<int> action_counts;
  for (const auto& stage : j.at("models")) {
    std::vector<FittedModel> row;
    for (const auto& m : stage.at("models")) row.push_back(FittedModel::from_json(m));
    action_counts.push_back(stage.at("action_count").get<int>());
    require(layout == StageModel::per_stage ? row.size() == 1
                                            : static_cast<int>(row.size()) == action_counts.back(),
            "checkpoint model count does not match the stage's actions");
    models.push_back(std::move(row));
  }
  require(static_cast<int>(models.size()) == K, "checkpoint stage count mismatch");
  PolicyVector fixed(K);
  for (int k = 0; k < K; ++k) {
    if (update_set.contains(k)) continue;
    const auto kind = manifest.at("fixed_policies").at(std::to_string(k)).get<std::string>();
    require(kind == "uniform-random", "checkpoint stage " + std::to_string(k) + " has a non-restorable fixed policy '" +
                                          kind + "'");
    const int A = action_counts[static_cast<std::size_t>(k)];
    fixed.set(k, PolicyKind::uniform_random, A, [A](const Vector&) { return uniform_probabilities(A); });
  }
  if (layout == StageModel::per_stage) {
    std::vector<FittedModel> stage_models;
    for (auto& row : models) stage_models.push_back(std::move(row.front()));
    return QVector(std::move(stage_models), std::move(action_counts), update_set, std::move(fixed));
  }
  return QVector(std::move(models), update_set, std::move(fixed));
}

}  // namespace cyclic
