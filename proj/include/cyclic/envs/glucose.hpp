#pragma once

#include <array>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "cyclic/core/mdp.hpp"

namespace cyclic {

enum class GlucoseStage { morning = 0, day = 1, evening = 2, night = 3 };

std::string to_string(GlucoseStage stage);

/// Cumulative nutrient slots, in this order.
enum Nutrient { C_M, P_M, F_M, C_D, P_D, F_D, C_E, P_E, F_E };

struct GlucoseState {
  double t = 6.0;
  double G = 120.0;
  double dG = 0.0;
  std::array<double, 9> cum{};
  double sex = 0.0;
  double weight = 70.0;
};

struct GlucoseAction {
  int insulin = 0;         // A_I in {0, 1}
  int meal = 0;            // A_M in {0, 1, 2}
  int activity = 0;        // A_P in {0, 1, 2}
  double sleep = 22.0;     // A_S in {22, 23, 24}
  int stress_reduction = 0;  // A_SR in {0, 1}
  int hydration = 0;         // A_H in {0, 1}

  void validate() const;
};

struct MealNutrients {
  double carbs = 0.0;
  double protein = 0.0;
  double fat = 0.0;
};

MealNutrients meal_nutrients(int meal_type);

struct GlucoseConfig {
  /// Coefficient of every "minor" cumulative-nutrient term whose magnitude is unreported.
  double other_cumulative_coef = 0.01;
  /// Meal type eaten when a stage's action says "meal".
  int meal_type = 1;
  /// A_P used when a stage's action says "activity".
  int activity_level = 1;
  /// A_SR and A_H held fixed for every decision.
  int stress_reduction = 0;
  int hydration = 0;
  std::array<double, 4> discounts{1.0, 1.0, 1.0, 0.9};
  std::array<double, 4> noise_sd{5.5, 4.5, 6.0, 6.0};
  double init_glucose_mean = 120.0;
  double init_glucose_sd = 30.0;
  double init_glucose_min = 70.0;
  double init_glucose_max = 300.0;
  double weight_min = 55.0;
  double weight_max = 95.0;
  double female_probability = 0.5;
  /// Debug: all rewards become 0.
  bool zero_reward = false;

  void validate() const;
};

nlohmann::json glucose_config_to_json(const GlucoseConfig& config);
GlucoseConfig glucose_config_from_json(const nlohmann::json& j);

/// Noise-free, unclipped G_calc.
double glucose_mean_next(GlucoseStage stage, const GlucoseState& s, const GlucoseAction& a, const GlucoseConfig& config);

/// One decision: clipped glucose, nutrient bookkeeping, clock and (at night) the 6 AM reset.
GlucoseState glucose_step(GlucoseStage stage, const GlucoseState& s, const GlucoseAction& a, const GlucoseConfig& config,
                          Rng& rng);

/// Same as glucose_step with the noise term replaced by `noise`.
GlucoseState glucose_step_with_noise(GlucoseStage stage, const GlucoseState& s, const GlucoseAction& a,
                                     const GlucoseConfig& config, double noise);

/// -3 T_<70 - 2 T_>250 - 1 T_[180,250], times from 10 midpoint samples on the segment G_t -> G_next.
double glucose_reward(double g_now, double g_next, double duration_hours);

int glucose_action_count(GlucoseStage stage);
GlucoseAction decode_glucose_action(GlucoseStage stage, int index, const GlucoseConfig& config);

/// Stage-specific state vectors:
///   morning (8):  t, G, dG, C_M, P_M, F_M, sex, W
///   day (11):     t, G, dG, C_M..F_M, C_D..F_D, sex, W
///   evening (14), night (14): t, G, dG, all nine cumulatives, sex, W
int glucose_state_dim(GlucoseStage stage);
Vector encode_glucose_state(GlucoseStage stage, const GlucoseState& s);
GlucoseState decode_glucose_state(GlucoseStage stage, const Vector& v);

GlucoseState sample_glucose_initial(const GlucoseConfig& config, Rng& rng);

CyclicMdpSpec make_glucose_env(const GlucoseConfig& config = {});

/// Human-readable parameterization, flagging values not taken from the model description.
nlohmann::json describe_glucose_env(const GlucoseConfig& config);

}  // namespace cyclic
