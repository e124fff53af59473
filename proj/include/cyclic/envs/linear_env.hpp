#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cyclic/core/mdp.hpp"

namespace cyclic {

/// Three-stage linear-Gaussian cycle: s_{k+1} = A_k s_k + B_k a_k + xi_k, r = w_k^T s + u_{k,a}.
struct LinearEnvParams {
  std::vector<int> dims{1, 2, 2};
  std::vector<Matrix> A;               // d_{k+1} x d_k
  std::vector<Vector> B;               // d_{k+1}
  std::vector<Vector> w;               // d_k
  std::vector<std::vector<double>> u;  // [k][a], binary actions
  std::vector<double> discounts{0.9, 0.9, 0.9};
  double noise_sd = 0.1;
  double state_bound = 2.0;

  int num_stages() const { return static_cast<int>(dims.size()); }
  void validate() const;
};

/// Coefficients A, B ~ U[-0.3, 0.3], w ~ U[-0.5, 0.5], u ~ N(0, 0.5^2), drawn from one seeded stream.
LinearEnvParams draw_linear_env_params(std::uint64_t seed, double discount = 0.9, double noise_sd = 0.1);

CyclicMdpSpec make_linear_env(const LinearEnvParams& params);
CyclicMdpSpec make_linear_env(std::uint64_t seed);

/// Exact optimal solution. Q* is affine in s, so the optimal action is a per-stage constant.
struct LinearEnvOptimum {
  std::vector<Vector> slopes;     // V*_k(s) = slopes[k]^T s + intercepts[k]
  std::vector<double> intercepts;
  std::vector<int> actions;
  /// E_{eta_k}[V*_k]; eta_k is centered, so this equals the intercepts.
  Vector values;
};

LinearEnvOptimum solve_linear_env(const LinearEnvParams& params);

/// Constant-action policy per stage.
PolicyVector constant_action_policy(const std::vector<int>& actions, const std::vector<int>& action_counts);

nlohmann::json linear_env_params_to_json(const LinearEnvParams& params);
LinearEnvParams linear_env_params_from_json(const nlohmann::json& j);

}  // namespace cyclic
