#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cyclic/core/mdp.hpp"
#include "cyclic/fqi/cyclefqi.hpp"
#include "cyclic/regressors/basis.hpp"

namespace cyclic {

/// Global coefficient layout: block (k, a) occupies
/// [offset(k) + a * L_k, offset(k) + (a + 1) * L_k).
struct SieveLayout {
  std::vector<BasisSpec> bases;
  std::vector<int> action_counts;
  std::vector<int> offsets;
  int total_dim = 0;

  /// One basis per stage, the template's input_dim replaced by d_k
  /// (tabular templates are used as given).
  static SieveLayout build(const CyclicMdpSpec& spec, const BasisSpec& basis_template);
  static SieveLayout build(std::vector<BasisSpec> bases, std::vector<int> action_counts);

  int num_stages() const { return static_cast<int>(bases.size()); }
  int feature_dim(int stage) const;
  int stage_dim(int stage) const { return feature_dim(stage) * action_counts.at(static_cast<std::size_t>(stage)); }
  int block_offset(int stage, int action) const;
};

/// Phi(state) placed in action block a of a length L * A vector.
Vector local_feature_psi(const Vector& state, int action, const BasisSpec& basis, int action_count);

/// Block a equals Phi(state) * probs[a].
Vector policy_weighted_u(const Vector& state, const BasisSpec& basis, const Vector& probs);

struct GlobalSystem {
  Matrix H;
  Vector b;
  std::size_t n = 0;
};

GlobalSystem assemble_global_system(const Dataset& data, const PolicyVector& policy, const SieveLayout& layout,
                                    const CyclicMdpSpec& spec);

/// H beta = b. Fails when the condition number exceeds max_condition.
Vector solve_beta(const GlobalSystem& system, double max_condition = 1e12);

/// L_tot x K matrix whose column k holds E_{s ~ eta_k}[U_k(s)] in stage k's block.
/// Monte Carlo over eta_k. When `use_moments` is set and the environment knows its
/// initial moments, E[Phi] enters as a control variate:
///   E[Phi pi_a] ~ mean((Phi - mean Phi) pi_a) + E[Phi] mean(pi_a),
/// which is exact whenever pi does not vary with the state.
Matrix expected_u(const SieveLayout& layout, const PolicyVector& policy, const CyclicMdpSpec& spec, int num_eta_samples,
                  Rng& rng, bool use_moments = true);

/// v_k = E[U_k]^T beta_k.
Vector estimate_value(const Vector& beta, const Matrix& expected_u);

/// Sandwich covariance E[U]^T H^-1 Omega H^-T E[U], symmetrized.
Matrix estimate_covariance(const GlobalSystem& system, const Vector& beta, const Dataset& data,
                           const PolicyVector& policy, const SieveLayout& layout, const CyclicMdpSpec& spec,
                           const Matrix& expected_u, double max_condition = 1e12);

/// Symmetric eigendecomposition roots; eigenvalues are floored at 1e-12 * trace.
Matrix symmetric_sqrt(const Matrix& m);
Matrix symmetric_inverse_sqrt(const Matrix& m);

struct InferenceConfig {
  BasisSpec basis = BasisSpec::quadratic_unique(1);
  int num_eta_samples = 10000;
  /// Use the environment's analytic initial moments as a control variate for E[U].
  bool analytic_feature_means = true;
  double max_condition = 1e12;
  double level = 0.95;
  /// Debug: multiplies every fold covariance.
  double sigma_inflation = 1.0;

  void validate() const;
};

nlohmann::json inference_config_to_json(const InferenceConfig& config);
InferenceConfig inference_config_from_json(const nlohmann::json& j);

struct FoldEstimate {
  Vector v_hat;
  Matrix sigma_hat;
  std::size_t n_eval = 0;
};

struct InferenceResult {
  Vector v_hat;
  Matrix sigma_hat;
  std::size_t n = 0;
  int folds = 2;
  std::vector<FoldEstimate> per_fold;
};

/// Value and covariance of `policy` from one evaluation sample.
FoldEstimate sieve_evaluate(const Dataset& data, const PolicyVector& policy, const CyclicMdpSpec& spec,
                            const InferenceConfig& config, Rng& eta_rng);

/// Per-stage seeded shuffle, then round-robin assignment into N folds.
std::vector<Dataset> partition_folds(const Dataset& data, int num_folds, Rng& rng);

/// Precision-weighted aggregation of N - 1 fold estimates.
InferenceResult aggregate_folds(std::vector<FoldEstimate> estimates, std::size_t n, int num_folds);

/// Cross-fitted inference: learn a greedy policy on the cumulative folds, evaluate it on the next fold, aggregate.
InferenceResult ensemble_evaluate(const Dataset& data, const CyclicMdpSpec& spec, int num_folds,
                                  const TrainConfig& train_config, const InferenceConfig& config, std::uint64_t seed,
                                  const UpdateSet* update_set = nullptr, const PolicyVector* fixed_policies = nullptr);

/// (n (N - 1) / N) (v_hat - v)^T Sigma^-1 (v_hat - v).
double mahalanobis_d2(const InferenceResult& result, const Vector& v);

bool confidence_region_contains(const InferenceResult& result, const Vector& v, double level);

nlohmann::json inference_result_to_json(const InferenceResult& result, double level,
                                        const std::optional<Vector>& v_star = std::nullopt);

}  // namespace cyclic
