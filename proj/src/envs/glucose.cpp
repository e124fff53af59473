#include "cyclic/envs/glucose.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <nlohmann/json.hpp>

namespace cyclic {

using nlohmann::json;

namespace {

constexpr std::array<int, 4> kFirstHour{6, 11, 17, 22};
constexpr std::array<int, 4> kLastHour{10, 16, 21, 22};
constexpr std::array<int, 4> kHorizon{5, 6, 5, 1};
constexpr std::array<int, 4> kActionCount{4, 8, 8, 6};
constexpr std::array<int, 4> kStateDim{8, 11, 14, 14};

double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

std::size_t idx(GlucoseStage s) { return static_cast<std::size_t>(s); }

GlucoseStage stage_of(int k) {
  require(k >= 0 && k < 4, "glucose env has stages 0..3");
  return static_cast<GlucoseStage>(k);
}

}  // namespace

std::string to_string(GlucoseStage stage) {
  switch (stage) {
    case GlucoseStage::morning: return "morning";
    case GlucoseStage::day: return "day";
    case GlucoseStage::evening: return "evening";
    case GlucoseStage::night: return "night";
  }
  return "unknown";
}

void GlucoseAction::validate() const {
  require(insulin == 0 || insulin == 1, "A_I must be 0 or 1");
  require(meal >= 0 && meal <= 2, "A_M must be 0, 1 or 2");
  require(activity >= 0 && activity <= 2, "A_P must be 0, 1 or 2");
  require(sleep == 22.0 || sleep == 23.0 || sleep == 24.0, "A_S must be 22, 23 or 24");
  require(stress_reduction == 0 || stress_reduction == 1, "A_SR must be 0 or 1");
  require(hydration == 0 || hydration == 1, "A_H must be 0 or 1");
}

MealNutrients meal_nutrients(int meal_type) {
  switch (meal_type) {
    case 0: return {0.0, 0.0, 0.0};
    case 1: return {30.0, 10.0, 10.0};
    case 2: return {70.0, 25.0, 25.0};
    default: throw Error("meal type must be 0, 1 or 2");
  }
}

void GlucoseConfig::validate() const {
  require(meal_type == 1 || meal_type == 2, "glucose config: meal_type must be 1 or 2");
  require(activity_level == 1 || activity_level == 2, "glucose config: activity_level must be 1 or 2");
  require(stress_reduction == 0 || stress_reduction == 1, "glucose config: stress_reduction must be 0 or 1");
  require(hydration == 0 || hydration == 1, "glucose config: hydration must be 0 or 1");
  for (double g : discounts) require(g >= 0.0 && g <= 1.0, "glucose config: discounts must lie in [0, 1]");
  require(discounts[0] * discounts[1] * discounts[2] * discounts[3] < 1.0, "glucose config: cycle discount must be < 1");
  for (double s : noise_sd) require(s >= 0.0, "glucose config: noise_sd must be nonnegative");
  require(init_glucose_sd >= 0.0 && init_glucose_min <= init_glucose_max, "glucose config: bad initial glucose law");
  require(weight_min > 0.0 && weight_min <= weight_max, "glucose config: bad weight range");
  require(female_probability >= 0.0 && female_probability <= 1.0, "glucose config: bad sex probability");
}

json glucose_config_to_json(const GlucoseConfig& c) {
  return json{{"other_cumulative_coef", c.other_cumulative_coef},
              {"meal_type", c.meal_type},
              {"activity_level", c.activity_level},
              {"stress_reduction", c.stress_reduction},
              {"hydration", c.hydration},
              {"discounts", c.discounts},
              {"noise_sd", c.noise_sd},
              {"init_glucose_mean", c.init_glucose_mean},
              {"init_glucose_sd", c.init_glucose_sd},
              {"init_glucose_min", c.init_glucose_min},
              {"init_glucose_max", c.init_glucose_max},
              {"weight_min", c.weight_min},
              {"weight_max", c.weight_max},
              {"female_probability", c.female_probability},
              {"zero_reward", c.zero_reward}};
}

GlucoseConfig glucose_config_from_json(const json& j) {
  GlucoseConfig c;
  c.other_cumulative_coef = j.value("other_cumulative_coef", c.other_cumulative_coef);
  c.meal_type = j.value("meal_type", c.meal_type);
  c.activity_level = j.value("activity_level", c.activity_level);
  c.stress_reduction = j.value("stress_reduction", c.stress_reduction);
  c.hydration = j.value("hydration", c.hydration);
  if (j.contains("discounts")) c.discounts = j.at("discounts").get<std::array<double, 4>>();
  if (j.contains("noise_sd")) c.noise_sd = j.at("noise_sd").get<std::array<double, 4>>();
  c.init_glucose_mean = j.value("init_glucose_mean", c.init_glucose_mean);
  c.init_glucose_sd = j.value("init_glucose_sd", c.init_glucose_sd);
  c.init_glucose_min = j.value("init_glucose_min", c.init_glucose_min);
  c.init_glucose_max = j.value("init_glucose_max", c.init_glucose_max);
  c.weight_min = j.value("weight_min", c.weight_min);
  c.weight_max = j.value("weight_max", c.weight_max);
  c.female_probability = j.value("female_probability", c.female_probability);
  c.zero_reward = j.value("zero_reward", c.zero_reward);
  c.validate();
  return c;
}

double glucose_mean_next(GlucoseStage stage, const GlucoseState& s, const GlucoseAction& a, const GlucoseConfig& config) {
  a.validate();
  const auto meal = meal_nutrients(a.meal);
  const double C = meal.carbs, P = meal.protein, F = meal.fat;
  const double AI = a.insulin, AP = a.activity, ASR = a.stress_reduction, AH = a.hydration;
  const bool sr = a.stress_reduction == 1;
  const bool h = a.hydration == 1;
  const auto& cum = s.cum;
  const double W = s.weight;
  const double G = s.G;
  const double oc = config.other_cumulative_coef;

  switch (stage) {
    case GlucoseStage::morning: {
      const double early_boost = s.t < 8.0 ? 5.0 : 0.0;
      const double carb_mod = (h ? 1.1 : 0.8) * (sr ? 1.1 : 0.7);
      const double time_6am_factor = (s.t == 6.0 && a.meal == 0) ? 0.25 : 1.0;
      const double fat_res = 1.0 + 0.07 * cum[F_M];
      const double carb_res = 1.0 + 0.005 * C;
      const double eff = time_6am_factor * (h ? 1.1 : 0.8) * (sr ? 1.1 : 0.7) / (fat_res * carb_res);
      return (10.0 + early_boost) + 0.93 * G + (0.50 + 0.002 * std::max(0.0, G - 120.0)) * carb_mod * C * (70.0 / W) +
             0.10 * P + 0.03 * F - 55.0 * AI * clip(eff, 0.05, 1.5) - 4.0 * ASR - 2.0 * AH +
             0.0018 * cum[C_M] * W + 0.04 * cum[P_M] - 0.02 * cum[F_M];
    }
    case GlucoseStage::day: {
      const double carb_proc_eff = (sr ? 1.0 : 0.8) * (h ? 1.0 : 0.85);
      const double sr_h_mod = (sr ? 1.1 : 0.8) * (h ? 1.15 : 0.85);
      const double eff = (1.0 - (0.002 * cum[C_M] + 0.004 * cum[F_M])) * sr_h_mod;
      const double activity_base = -20.0;
      const double act_carb_syn = -0.15 * (C / 50.0) * AP;
      const double act_sr_h_mod = (sr ? 1.1 : 0.9) * (h ? 1.2 : 0.8);
      const double other = oc * (cum[P_D] + cum[F_D] + cum[P_M] + cum[F_M]);
      return 5.0 + 0.94 * G + (0.42 * carb_proc_eff) * C * (70.0 / W) + 0.09 * P - 80.0 * AI * clip(eff, 0.1, 1.3) +
             (activity_base + act_carb_syn) * AP * act_sr_h_mod - 8.0 * AI * (a.activity > 0 ? 1.0 : 0.0) -
             6.0 * ASR - 4.0 * AH + 0.0013 * cum[C_D] * W + 0.020 * cum[C_M] + other;
    }
    case GlucoseStage::evening: {
      const double carb_proc_eff = (sr ? 1.0 : 0.8) * (h ? 1.0 : 0.85);
      const double sr_h_mod = (sr ? 1.0 : 0.8) * (h ? 1.0 : 0.85);
      const double fat_res = 0.18 * F + 0.010 * cum[F_D] + 0.008 * cum[F_M];
      const double eff = sr_h_mod / (1.0 + fat_res);
      double activity = -10.0 * AP * (sr ? 1.0 : 0.7) * (h ? 1.0 : 0.75);
      if (a.activity > 0 && (C > 45.0 || F > 12.0)) activity *= 0.4;
      const double other = oc * (cum[P_E] + cum[F_E] + cum[C_D] + cum[F_D] + cum[C_M] + cum[P_D]);
      return (10.0 + 0.003 * (cum[C_M] + cum[C_D])) + 0.94 * G + (0.40 * carb_proc_eff) * C * (70.0 / W) + 0.10 * P +
             0.18 * F - 55.0 * AI * clip(eff, 0.1, 1.0) + activity - 3.0 * ASR - 1.5 * AH +
             0.0016 * cum[C_E] * W + other;
    }
    case GlucoseStage::night: {
      const double eod_push = 0.15 * cum[F_E] - 0.08 * cum[P_E] + (sr ? -1.0 : 1.5) + (h ? -0.5 : 1.0);
      const double resist = 0.003 * std::max(0.0, G - 150.0) + 0.01 * cum[F_E] + 0.002 * cum[C_E] +
                            (sr ? -0.1 : 0.3) + (h ? -0.05 : 0.2);
      const double eff = 1.0 - resist;
      const double eff_sleep_hrs = std::max(0.0, a.sleep - 22.0);
      const double sleep_qual = (sr ? 1.0 : 0.7) * (h ? 1.0 : 0.8) * std::max(0.5, 1.0 - 0.004 * std::max(0.0, G - 140.0));
      const double linger = 0.03 * cum[C_E] + 0.025 * cum[F_E] + 0.02 * cum[P_E] + 0.001 * cum[C_M] + 0.002 * cum[F_D];
      return (5.0 + eod_push) + 0.97 * G - 30.0 * AI * clip(eff, 0.05, 1.0) + (-2.5 * eff_sleep_hrs * sleep_qual) +
             linger - 0.5 * ASR - 0.2 * AH;
    }
  }
  return G;
}

GlucoseState glucose_step_with_noise(GlucoseStage stage, const GlucoseState& s, const GlucoseAction& a,
                                     const GlucoseConfig& config, double noise) {
  const double g_next = clip(glucose_mean_next(stage, s, a, config) + noise, 50.0, 450.0);
  GlucoseState out = s;
  out.G = g_next;
  if (stage == GlucoseStage::night) {
    out.t = 6.0;
    out.dG = (g_next - s.G) / 8.0;
    out.cum.fill(0.0);
    return out;
  }
  out.t = s.t + 1.0;
  out.dG = g_next - s.G;
  const auto meal = meal_nutrients(a.meal);
  const std::size_t base = 3 * idx(stage);
  out.cum[base] += meal.carbs;
  out.cum[base + 1] += meal.protein;
  out.cum[base + 2] += meal.fat;
  return out;
}

GlucoseState glucose_step(GlucoseStage stage, const GlucoseState& s, const GlucoseAction& a, const GlucoseConfig& config,
                          Rng& rng) {
  const double sd = config.noise_sd[idx(stage)];
  double noise = 0.0;
  if (sd > 0.0) noise = std::normal_distribution<double>(0.0, sd)(rng);
  return glucose_step_with_noise(stage, s, a, config, noise);
}

double glucose_reward(double g_now, double g_next, double duration_hours) {
  int below = 0, above = 0, high = 0;
  for (int j = 1; j <= 10; ++j) {
    const double g = g_now + (j - 0.5) / 10.0 * (g_next - g_now);
    if (g < 70.0)
      ++below;
    else if (g > 250.0)
      ++above;
    else if (g >= 180.0)
      ++high;
  }
  const double scale = duration_hours / 10.0;
  return -3.0 * below * scale - 2.0 * above * scale - 1.0 * high * scale;
}

int glucose_action_count(GlucoseStage stage) { return kActionCount[idx(stage)]; }

GlucoseAction decode_glucose_action(GlucoseStage stage, int index, const GlucoseConfig& config) {
  require(index >= 0 && index < glucose_action_count(stage),
          "glucose " + to_string(stage) + " action index " + std::to_string(index) + " out of range");
  GlucoseAction a;
  a.stress_reduction = config.stress_reduction;
  a.hydration = config.hydration;
  a.insulin = index % 2;
  switch (stage) {
    case GlucoseStage::morning: a.meal = (index / 2) ? config.meal_type : 0; break;
    case GlucoseStage::day:
    case GlucoseStage::evening:
      a.meal = ((index / 2) % 2) ? config.meal_type : 0;
      a.activity = (index / 4) ? config.activity_level : 0;
      break;
    case GlucoseStage::night: a.sleep = 22.0 + index / 2; break;
  }
  return a;
}

int glucose_state_dim(GlucoseStage stage) { return kStateDim[idx(stage)]; }

Vector encode_glucose_state(GlucoseStage stage, const GlucoseState& s) {
  const int n_cum = kStateDim[idx(stage)] - 5;
  Vector v(kStateDim[idx(stage)]);
  v[0] = s.t;
  v[1] = s.G;
  v[2] = s.dG;
  for (int i = 0; i < n_cum; ++i) v[3 + i] = s.cum[static_cast<std::size_t>(i)];
  v[3 + n_cum] = s.sex;
  v[4 + n_cum] = s.weight;
  return v;
}

GlucoseState decode_glucose_state(GlucoseStage stage, const Vector& v) {
  require(v.size() == kStateDim[idx(stage)], "glucose " + to_string(stage) + " state must have length " +
                                                 std::to_string(kStateDim[idx(stage)]));
  const auto n_cum = static_cast<int>(v.size()) - 5;
  GlucoseState s;
  s.t = v[0];
  s.G = v[1];
  s.dG = v[2];
  for (int i = 0; i < n_cum; ++i) s.cum[static_cast<std::size_t>(i)] = v[3 + i];
  s.sex = v[3 + n_cum];
  s.weight = v[4 + n_cum];
  return s;
}

GlucoseState sample_glucose_initial(const GlucoseConfig& config, Rng& rng) {
  GlucoseState s;
  s.t = 6.0;
  s.G = clip(std::normal_distribution<double>(config.init_glucose_mean, config.init_glucose_sd)(rng),
             config.init_glucose_min, config.init_glucose_max);
  s.dG = 0.0;
  s.cum.fill(0.0);
  s.sex = std::bernoulli_distribution(config.female_probability)(rng) ? 1.0 : 0.0;
  s.weight = std::uniform_real_distribution<double>(config.weight_min, config.weight_max)(rng);
  return s;
}

CyclicMdpSpec make_glucose_env(const GlucoseConfig& config_in) {
  config_in.validate();
  auto config = std::make_shared<const GlucoseConfig>(config_in);
  CyclicMdpSpec spec;
  const std::array<double, 4> duration{1.0, 1.0, 1.0, 8.0};
  for (int k = 0; k < 4; ++k) {
    const auto st = stage_of(k);
    StageSpec s;
    s.name = to_string(st);
    s.state_dim = kStateDim[idx(st)];
    s.action_count = kActionCount[idx(st)];
    s.horizon = kHorizon[idx(st)];
    s.discount = config->discounts[idx(st)];
    s.reward_max = 3.0 * duration[idx(st)];
    spec.stages.push_back(s);
  }
  spec.is_terminal = [](int k, const Vector& s, int) {
    return s[0] >= static_cast<double>(kLastHour[idx(stage_of(k))]);
  };
  spec.stage_transition = [](int k, const Vector& exit_state) {
    const auto st = stage_of(k);
    const auto next = stage_of((k + 1) % 4);
    return encode_glucose_state(next, decode_glucose_state(st, exit_state));
  };
  spec.step = [config, duration](int k, const Vector& sv, int a, Rng& rng) {
    const auto st = stage_of(k);
    const auto s = decode_glucose_state(st, sv);
    require(s.t >= kFirstHour[idx(st)] && s.t <= kLastHour[idx(st)],
            "glucose " + to_string(st) + " state has hour " + std::to_string(s.t) + " outside its window");
    const auto next = glucose_step(st, s, decode_glucose_action(st, a, *config), *config, rng);
    StepResult out;
    out.reward = config->zero_reward ? 0.0 : glucose_reward(s.G, next.G, duration[idx(st)]);
    out.next_state = encode_glucose_state(st, next);
    return out;
  };
  // Later stages start wherever a uniformly random day from 6 AM leaves the patient.
  spec.sample_initial = [config](int k, Rng& rng) {
    GlucoseState s = sample_glucose_initial(*config, rng);
    for (int j = 0; j < k; ++j) {
      const auto st = stage_of(j);
      std::uniform_int_distribution<int> pick(0, kActionCount[idx(st)] - 1);
      for (int h = 0; h < kHorizon[idx(st)]; ++h) s = glucose_step(st, s, decode_glucose_action(st, pick(rng), *config), *config, rng);
    }
    return encode_glucose_state(stage_of(k), s);
  };
  spec.validate();
  return spec;
}

json describe_glucose_env(const GlucoseConfig& c) {
  json stages = json::array();
  const std::array<double, 4> duration{1.0, 1.0, 1.0, 8.0};
  for (int k = 0; k < 4; ++k) {
    const auto st = stage_of(k);
    stages.push_back(json{{"name", to_string(st)},
                          {"hours", std::to_string(kFirstHour[idx(st)]) + "-" + std::to_string(kLastHour[idx(st)])},
                          {"horizon", kHorizon[idx(st)]},
                          {"actions", kActionCount[idx(st)]},
                          {"state_dim", kStateDim[idx(st)]},
                          {"discount", c.discounts[idx(st)]},
                          {"noise_sd", c.noise_sd[idx(st)]},
                          {"reward_hours", duration[idx(st)]}});
  }
  return json{{"name", "glucose"},
              {"stages", stages},
              {"config", glucose_config_to_json(c)},
              {"action_encoding",
               {{"morning", "index = A_I + 2 * meal"},
                {"day", "index = A_I + 2 * meal + 4 * activity"},
                {"evening", "index = A_I + 2 * meal + 4 * activity"},
                {"night", "index = A_I + 2 * (A_S - 22)"}}},
              {"non_model_defaults",
               {{"other_cumulative_coef", "unreported minor-term coefficients, default 0.01"},
                {"meal_type", "meal eaten when an action says meal"},
                {"activity_level", "A_P used when an action says activity"},
                {"stress_reduction", "A_SR held fixed"},
                {"hydration", "A_H held fixed"},
                {"initial_state", "G ~ N(120, 30^2) clipped to [70, 300], dG = 0, sex ~ Bernoulli(0.5), W ~ U[55, 95]"},
                {"later_stage_starts", "uniform-random roll forward from 6 AM"},
                {"reward_points", "10 midpoints (j - 0.5)/10 on the G_t -> G_t+1 segment"},
                {"evening_carb_proc_eff", "day definition reused"},
                {"night_dG", "(G_6am - G_22) / 8"}}}};
}

}  // namespace cyclic
