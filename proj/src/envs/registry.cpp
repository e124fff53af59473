#include "cyclic/envs/registry.hpp"

#include "cyclic/envs/glucose.hpp"
#include "cyclic/envs/linear_env.hpp"

namespace cyclic {

using nlohmann::json;

namespace {

Transition record_step(const CyclicMdpSpec& spec, int k, const Vector& s, int a, int decisions_in_stage, Rng& rng) {
  auto r = spec.step(k, s, a, rng);
  Transition tr;
  tr.stage = k;
  tr.state = s;
  tr.action = a;
  tr.reward = r.reward;
  tr.next_state = std::move(r.next_state);
  tr.terminal = spec.is_terminal(k, s, a) || decisions_in_stage + 1 >= spec.stage(k).horizon;
  return tr;
}

}  // namespace

Dataset sample_offline_dataset(const CyclicMdpSpec& spec, const PolicyVector& behavior, int n_per_stage,
                               const SamplingConfig& sampling, Rng& rng) {
  spec.validate();
  require(n_per_stage >= 1, "n_per_stage must be >= 1");
  const int K = spec.num_stages();
  require(behavior.num_stages() == K, "behavior policy must cover every stage");
  Dataset data(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) data[static_cast<std::size_t>(k)].stage = k;
  const auto n = static_cast<std::size_t>(n_per_stage);

  if (sampling.scheme == SamplingScheme::independent) {
    for (int k = 0; k < K; ++k)
      for (std::size_t i = 0; i < n; ++i) {
        const Vector s = spec.sample_initial(k, rng);
        const int a = behavior.sample_action(k, s, rng);
        data[static_cast<std::size_t>(k)].transitions.push_back(record_step(spec, k, s, a, 0, rng));
      }
    return data;
  }

  require(sampling.days_per_trajectory >= 1, "days_per_trajectory must be >= 1");
  auto full = [&] {
    for (const auto& d : data)
      if (d.size() < n) return false;
    return true;
  };
  while (!full()) {
    int k = 0;
    Vector s = spec.sample_initial(0, rng);
    for (int day = 0; day < sampling.days_per_trajectory && !full(); ++day) {
      for (int j = 0; j < K; ++j) {
        for (int h = 0;; ++h) {
          const int a = behavior.sample_action(k, s, rng);
          Transition tr = record_step(spec, k, s, a, h, rng);
          const bool terminal = tr.terminal;
          Vector next = terminal ? spec.map_to_next_stage(k, tr.next_state) : tr.next_state;
          auto& bucket = data[static_cast<std::size_t>(k)].transitions;
          if (bucket.size() < n) bucket.push_back(std::move(tr));
          s = std::move(next);
          if (terminal) break;
        }
        k = spec.next_stage(k);
      }
    }
  }
  return data;
}

Environment make_environment(const std::string& name, const json& params) {
  Environment env;
  env.name = name;
  if (name == "linear") {
    const LinearEnvParams p = resolve_linear_env_params(params);
    env.spec = make_linear_env(p);
    env.sampling.scheme = SamplingScheme::independent;
    env.description = json{{"name", "linear"},
                           {"coefficient_seed", params.value("seed", std::uint64_t{0})},
                           {"parameters", linear_env_params_to_json(p)},
                           {"non_model_defaults", {{"discount", "0.9 per stage"}, {"horizon", "1 (every step terminal)"}}}};
    return env;
  }
  if (name == "glucose" || name == "glucose-zero-reward") {
    json cfg = params;
    cfg.erase("days_per_trajectory");
    GlucoseConfig c = glucose_config_from_json(cfg);
    if (name == "glucose-zero-reward") c.zero_reward = true;
    env.spec = make_glucose_env(c);
    env.sampling.scheme = SamplingScheme::trajectories;
    env.sampling.days_per_trajectory = params.value("days_per_trajectory", 5);
    env.description = describe_glucose_env(c);
    env.description["name"] = name;
    env.description["days_per_trajectory"] = env.sampling.days_per_trajectory;
    return env;
  }
  throw Error("unknown environment '" + name + "'");
}

LinearEnvParams resolve_linear_env_params(const json& params) {
  if (params.contains("stages")) return linear_env_params_from_json(params);
  return draw_linear_env_params(params.value("seed", std::uint64_t{0}), params.value("discount", 0.9),
                                params.value("noise_sd", 0.1));
}

std::vector<std::string> environment_names() { return {"linear", "glucose", "glucose-zero-reward"}; }

}  // namespace cyclic
