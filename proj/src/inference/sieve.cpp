#include "cyclic/inference/sieve.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cyclic/inference/chi2.hpp"

namespace cyclic {

using nlohmann::json;

SieveLayout SieveLayout::build(const CyclicMdpSpec& spec, const BasisSpec& basis_template) {
  std::vector<BasisSpec> bases;
  std::vector<int> actions;
  for (const auto& s : spec.stages) {
    BasisSpec b = basis_template;
    if (b.kind != BasisKind::tabular_indicator) b.input_dim = s.state_dim;
    bases.push_back(b);
    actions.push_back(s.action_count);
  }
  return build(std::move(bases), std::move(actions));
}

SieveLayout SieveLayout::build(std::vector<BasisSpec> bases, std::vector<int> action_counts) {
  require(!bases.empty() && bases.size() == action_counts.size(), "sieve layout: one basis and action count per stage");
  SieveLayout layout;
  layout.bases = std::move(bases);
  layout.action_counts = std::move(action_counts);
  for (std::size_t k = 0; k < layout.bases.size(); ++k) {
    layout.bases[k].validate();
    require(layout.action_counts[k] >= 1, "sieve layout: action count must be positive");
    layout.offsets.push_back(layout.total_dim);
    layout.total_dim += layout.bases[k].feature_dim() * layout.action_counts[k];
  }
  return layout;
}

int SieveLayout::feature_dim(int stage) const { return bases.at(static_cast<std::size_t>(stage)).feature_dim(); }

int SieveLayout::block_offset(int stage, int action) const {
  require(stage >= 0 && stage < num_stages(), "sieve layout: stage out of range");
  require(action >= 0 && action < action_counts[static_cast<std::size_t>(stage)], "sieve layout: action out of range");
  return offsets[static_cast<std::size_t>(stage)] + action * feature_dim(stage);
}

Vector local_feature_psi(const Vector& state, int action, const BasisSpec& basis, int action_count) {
  require(action_count >= 1, "psi: action count must be positive");
  require(action >= 0 && action < action_count, "psi: action " + std::to_string(action) + " out of range [0, " +
                                                    std::to_string(action_count) + ")");
  const int L = basis.feature_dim();
  Vector psi = Vector::Zero(static_cast<Eigen::Index>(L) * action_count);
  build_basis_into(state, basis, psi.segment(static_cast<Eigen::Index>(action) * L, L));
  return psi;
}

Vector policy_weighted_u(const Vector& state, const BasisSpec& basis, const Vector& probs) {
  const auto A = static_cast<int>(probs.size());
  check_probabilities(probs, A);
  const int L = basis.feature_dim();
  const Vector phi = build_basis(state, basis);
  Vector u(static_cast<Eigen::Index>(L) * A);
  for (int a = 0; a < A; ++a) u.segment(static_cast<Eigen::Index>(a) * L, L) = phi * probs[a];
  return u;
}

namespace {

void check_layout(const SieveLayout& layout, const CyclicMdpSpec& spec, const PolicyVector& policy) {
  require(layout.num_stages() == spec.num_stages(), "sieve layout and environment disagree on K");
  require(policy.num_stages() == spec.num_stages(), "evaluated policy must cover every stage");
  for (int k = 0; k < spec.num_stages(); ++k) {
    require(policy.has(k), "evaluated policy undefined at stage " + std::to_string(k));
    require(layout.action_counts[static_cast<std::size_t>(k)] == spec.stage(k).action_count,
            "sieve layout action count mismatch at stage " + std::to_string(k));
  }
}

// The (continuation) column vector c with H += psi c^T, and the pieces needed for residuals.
struct TransitionTerms {
  int row_offset = 0;
  Vector phi;           // Phi_k(s), occupies rows [row_offset, row_offset + L_k)
  Vector continuation;  // (1 - T) U + gamma T U', full length L_tot
};

TransitionTerms transition_terms(const Transition& tr, const PolicyVector& policy, const SieveLayout& layout,
                                 const CyclicMdpSpec& spec) {
  const int k = tr.stage;
  const auto& basis = layout.bases[static_cast<std::size_t>(k)];
  TransitionTerms t;
  t.row_offset = layout.block_offset(k, tr.action);
  t.phi = build_basis(tr.state, basis);
  t.continuation = Vector::Zero(layout.total_dim);
  if (!tr.terminal) {
    const Vector u = policy_weighted_u(tr.next_state, basis, policy.probabilities(k, tr.next_state));
    t.continuation.segment(layout.offsets[static_cast<std::size_t>(k)], u.size()) += u;
  } else {
    const int next = spec.next_stage(k);
    const double gamma = spec.stage(k).discount;
    if (gamma != 0.0) {
      const Vector s_next = spec.map_to_next_stage(k, tr.next_state);
      const Vector u = policy_weighted_u(s_next, layout.bases[static_cast<std::size_t>(next)],
                                         policy.probabilities(next, s_next));
      t.continuation.segment(layout.offsets[static_cast<std::size_t>(next)], u.size()) += gamma * u;
    }
  }
  return t;
}

Eigen::PartialPivLU<Matrix> checked_factor(const Matrix& H, double max_condition) {
  require(H.rows() == H.cols() && H.rows() > 0, "sieve system must be square and nonempty");
  require(H.allFinite(), "sieve system contains non-finite entries");
  Eigen::JacobiSVD<Matrix> svd(H);
  const Vector& sv = svd.singularValues();
  const double smax = sv[0];
  const double smin = sv[sv.size() - 1];
  const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (!(cond <= max_condition)) {
    std::ostringstream msg;
    msg << "sieve matrix H is ill-conditioned (condition number " << cond << " > " << max_condition
        << ", smallest singular value " << smin << "); use a larger sample or a smaller basis";
    throw Error(msg.str());
  }
  return Eigen::PartialPivLU<Matrix>(H);
}

}  // namespace

GlobalSystem assemble_global_system(const Dataset& data, const PolicyVector& policy, const SieveLayout& layout,
                                    const CyclicMdpSpec& spec) {
  validate_dataset(data, spec);
  check_layout(layout, spec, policy);
  GlobalSystem sys;
  sys.n = total_transitions(data);
  require(sys.n > 0, "cannot assemble the sieve system from an empty dataset");
  sys.H = Matrix::Zero(layout.total_dim, layout.total_dim);
  sys.b = Vector::Zero(layout.total_dim);
  for (const auto& stage_data : data)
    for (const auto& tr : stage_data.transitions) {
      const auto t = transition_terms(tr, policy, layout, spec);
      const auto L = t.phi.size();
      // psi (psi - continuation)^T; psi is phi in its own block.
      sys.H.block(t.row_offset, 0, L, layout.total_dim).noalias() -= t.phi * t.continuation.transpose();
      sys.H.block(t.row_offset, t.row_offset, L, L).noalias() += t.phi * t.phi.transpose();
      sys.b.segment(t.row_offset, L) += t.phi * tr.reward;
    }
  const double inv_n = 1.0 / static_cast<double>(sys.n);
  sys.H *= inv_n;
  sys.b *= inv_n;
  return sys;
}

Vector solve_beta(const GlobalSystem& system, double max_condition) {
  require(system.b.size() == system.H.rows(), "sieve system: b has the wrong length");
  const auto lu = checked_factor(system.H, max_condition);
  Vector beta = lu.solve(system.b);
  const double residual = (system.H * beta - system.b).lpNorm<Eigen::Infinity>();
  const double scale = 1.0 + system.b.lpNorm<Eigen::Infinity>();
  if (!(residual <= 1e-8 * scale)) {
    // One step of iterative refinement before giving up.
    beta += lu.solve(system.b - system.H * beta);
    const double refined = (system.H * beta - system.b).lpNorm<Eigen::Infinity>();
    require(refined <= 1e-8 * scale, "sieve solve residual " + std::to_string(refined) + " exceeds tolerance");
  }
  return beta;
}

Matrix expected_u(const SieveLayout& layout, const PolicyVector& policy, const CyclicMdpSpec& spec, int num_eta_samples,
                  Rng& rng, bool use_moments) {
  check_layout(layout, spec, policy);
  require(num_eta_samples >= 1, "expected_u needs at least one initial-state draw");
  const int K = spec.num_stages();
  Matrix eu = Matrix::Zero(layout.total_dim, K);
  for (int k = 0; k < K; ++k) {
    const auto& basis = layout.bases[static_cast<std::size_t>(k)];
    const int L = basis.feature_dim();
    const int A = layout.action_counts[static_cast<std::size_t>(k)];
    std::optional<Vector> exact_mean;
    if (use_moments && spec.initial_moment)
      exact_mean = basis_expectation(basis, [&](const std::vector<int>& e) { return spec.initial_moment(k, e); });
    Matrix weighted = Matrix::Zero(L, A);  // sum Phi(s) pi_a(s)
    Vector phi_sum = Vector::Zero(L);
    Vector pi_sum = Vector::Zero(A);
    for (int i = 0; i < num_eta_samples; ++i) {
      const Vector s = spec.sample_initial(k, rng);
      const Vector phi = build_basis(s, basis);
      const Vector probs = policy.probabilities(k, s);
      weighted.noalias() += phi * probs.transpose();
      phi_sum += phi;
      pi_sum += probs;
    }
    const double M = num_eta_samples;
    Matrix mean_u = weighted / M;
    if (exact_mean) mean_u += (*exact_mean - phi_sum / M) * (pi_sum / M).transpose();
    for (int a = 0; a < A; ++a) eu.col(k).segment(layout.block_offset(k, a), L) = mean_u.col(a);
  }
  return eu;
}

Vector estimate_value(const Vector& beta, const Matrix& expected_u) {
  require(beta.size() == expected_u.rows(), "estimate_value: beta length does not match the layout");
  return expected_u.transpose() * beta;
}

Matrix estimate_covariance(const GlobalSystem& system, const Vector& beta, const Dataset& data,
                           const PolicyVector& policy, const SieveLayout& layout, const CyclicMdpSpec& spec,
                           const Matrix& expected_u, double max_condition) {
  check_layout(layout, spec, policy);
  require(beta.size() == layout.total_dim && expected_u.rows() == layout.total_dim,
          "estimate_covariance: dimension mismatch");
  Matrix omega = Matrix::Zero(layout.total_dim, layout.total_dim);
  std::size_t n = 0;
  for (const auto& stage_data : data)
    for (const auto& tr : stage_data.transitions) {
      const auto t = transition_terms(tr, policy, layout, spec);
      const auto L = t.phi.size();
      const double e = tr.reward + t.continuation.dot(beta) - t.phi.dot(beta.segment(t.row_offset, L));
      omega.block(t.row_offset, t.row_offset, L, L).noalias() += (e * e) * (t.phi * t.phi.transpose());
      ++n;
    }
  require(n == system.n, "estimate_covariance: dataset differs from the one the system was assembled from");
  omega /= static_cast<double>(n);
  const auto lu = checked_factor(system.H, max_condition);
  // W = H^-T E[U]; Sigma = W^T Omega W.
  const Matrix w = lu.transpose().solve(expected_u);
  Matrix sigma = w.transpose() * omega * w;
  return 0.5 * (sigma + sigma.transpose());
}

namespace {

Eigen::SelfAdjointEigenSolver<Matrix> floored_eigen(const Matrix& m, Vector& values) {
  require(m.rows() == m.cols(), "matrix root of a non-square matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
  require(es.info() == Eigen::Success, "eigendecomposition failed");
  const double floor = 1e-12 * m.trace();
  values = es.eigenvalues().cwiseMax(floor);
  return es;
}

}  // namespace

Matrix symmetric_sqrt(const Matrix& m) {
  Vector values;
  const auto es = floored_eigen(m, values);
  values = values.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * values.asDiagonal() * es.eigenvectors().transpose();
}

Matrix symmetric_inverse_sqrt(const Matrix& m) {
  require(m.trace() > 0.0, "inverse square root of a matrix with nonpositive trace");
  Vector values;
  const auto es = floored_eigen(m, values);
  values = values.cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * values.asDiagonal() * es.eigenvectors().transpose();
}

void InferenceConfig::validate() const {
  basis.validate();
  require(num_eta_samples >= 1, "num_eta_samples must be >= 1");
  require(max_condition > 1.0, "max_condition must exceed 1");
  require(level > 0.0 && level < 1.0, "confidence level must lie in (0, 1)");
  require(sigma_inflation > 0.0, "sigma_inflation must be positive");
}

json inference_config_to_json(const InferenceConfig& c) {
  return json{{"basis", to_string(c.basis.kind)},
              {"degree", c.basis.degree},
              {"num_eta_samples", c.num_eta_samples},
              {"analytic_feature_means", c.analytic_feature_means},
              {"max_condition", c.max_condition},
              {"level", c.level},
              {"sigma_inflation", c.sigma_inflation}};
}

InferenceConfig inference_config_from_json(const json& j) {
  InferenceConfig c;
  if (j.contains("basis")) c.basis.kind = basis_kind_from_string(j.at("basis").get<std::string>());
  c.basis.degree = j.value("degree", c.basis.degree);
  c.num_eta_samples = j.value("num_eta_samples", c.num_eta_samples);
  c.analytic_feature_means = j.value("analytic_feature_means", c.analytic_feature_means);
  c.max_condition = j.value("max_condition", c.max_condition);
  c.level = j.value("level", c.level);
  c.sigma_inflation = j.value("sigma_inflation", c.sigma_inflation);
  c.validate();
  return c;
}

FoldEstimate sieve_evaluate(const Dataset& data, const PolicyVector& policy, const CyclicMdpSpec& spec,
                            const InferenceConfig& config, Rng& eta_rng) {
  config.validate();
  const auto layout = SieveLayout::build(spec, config.basis);
  const auto n = total_transitions(data);
  require(n >= static_cast<std::size_t>(layout.total_dim),
          "evaluation fold has n = " + std::to_string(n) + " samples but the sieve needs L_tot = " +
              std::to_string(layout.total_dim) + " coefficients");
  const auto system = assemble_global_system(data, policy, layout, spec);
  const Vector beta = solve_beta(system, config.max_condition);
  const Matrix eu = expected_u(layout, policy, spec, config.num_eta_samples, eta_rng, config.analytic_feature_means);
  FoldEstimate est;
  est.v_hat = estimate_value(beta, eu);
  est.sigma_hat =
      config.sigma_inflation * estimate_covariance(system, beta, data, policy, layout, spec, eu, config.max_condition);
  est.n_eval = n;
  return est;
}

std::vector<Dataset> partition_folds(const Dataset& data, int num_folds, Rng& rng) {
  require(num_folds >= 2, "sample splitting needs at least two folds");
  std::vector<Dataset> folds(static_cast<std::size_t>(num_folds), Dataset(data.size()));
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto& trs = data[k].transitions;
    require(trs.size() >= static_cast<std::size_t>(num_folds),
            "stage " + std::to_string(k) + " has " + std::to_string(trs.size()) + " samples, fewer than " +
                std::to_string(num_folds) + " folds");
    std::vector<std::size_t> idx(trs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    for (auto& f : folds) f[k].stage = data[k].stage;
    for (std::size_t i = 0; i < idx.size(); ++i)
      folds[i % static_cast<std::size_t>(num_folds)][k].transitions.push_back(trs[idx[i]]);
  }
  return folds;
}

InferenceResult aggregate_folds(std::vector<FoldEstimate> estimates, std::size_t n, int num_folds) {
  require(!estimates.empty(), "aggregation needs at least one fold estimate");
  require(static_cast<int>(estimates.size()) == num_folds - 1, "aggregation expects N - 1 fold estimates");
  const auto K = estimates.front().v_hat.size();
  Matrix inv_root_mean = Matrix::Zero(K, K);
  Vector weighted = Vector::Zero(K);
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const auto& e = estimates[i];
    require(e.v_hat.size() == K && e.sigma_hat.rows() == K && e.sigma_hat.cols() == K,
            "fold estimates disagree in dimension");
    require(e.sigma_hat.allFinite() && e.sigma_hat.trace() > 0.0,
            "fold " + std::to_string(i + 2) + " produced a non-invertible covariance estimate");
    const Matrix r = symmetric_inverse_sqrt(e.sigma_hat);
    inv_root_mean += r;
    weighted += r * e.v_hat;
  }
  inv_root_mean /= static_cast<double>(estimates.size());
  Matrix root = inv_root_mean.ldlt().solve(Matrix::Identity(K, K));
  root = 0.5 * (root + root.transpose());
  InferenceResult out;
  out.v_hat = root * weighted / static_cast<double>(num_folds - 1);
  const Matrix sigma = root * root;
  out.sigma_hat = 0.5 * (sigma + sigma.transpose());
  out.n = n;
  out.folds = num_folds;
  out.per_fold = std::move(estimates);
  return out;
}

InferenceResult ensemble_evaluate(const Dataset& data, const CyclicMdpSpec& spec, int num_folds,
                                  const TrainConfig& train_config, const InferenceConfig& config, std::uint64_t seed,
                                  const UpdateSet* update_set, const PolicyVector* fixed_policies) {
  config.validate();
  validate_dataset(data, spec);
  const int K = spec.num_stages();
  const UpdateSet u = update_set ? *update_set : UpdateSet::all(K);
  const PolicyVector fixed = fixed_policies ? *fixed_policies : PolicyVector(K);
  Rng split_rng = make_rng({seed, 1});
  const auto folds = partition_folds(data, num_folds, split_rng);

  std::vector<FoldEstimate> estimates;
  Dataset cumulative(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) cumulative[static_cast<std::size_t>(k)].stage = k;
  for (int f = 0; f + 1 < num_folds; ++f) {
    for (int k = 0; k < K; ++k) {
      auto& dst = cumulative[static_cast<std::size_t>(k)].transitions;
      const auto& src = folds[static_cast<std::size_t>(f)][static_cast<std::size_t>(k)].transitions;
      dst.insert(dst.end(), src.begin(), src.end());
    }
    TrainConfig tc = train_config;
    tc.seed = make_rng({seed, 2, static_cast<std::uint64_t>(f)})();
    const auto trained = train_cyclefqi(cumulative, spec, u, fixed, tc);
    Rng eta_rng = make_rng({seed, 3, static_cast<std::uint64_t>(f)});
    try {
      estimates.push_back(
          sieve_evaluate(folds[static_cast<std::size_t>(f + 1)], trained.policy, spec, config, eta_rng));
    } catch (const Error& e) {
      throw Error("fold " + std::to_string(f + 2) + ": " + e.what());
    }
  }
  return aggregate_folds(std::move(estimates), total_transitions(data), num_folds);
}

double mahalanobis_d2(const InferenceResult& result, const Vector& v) {
  require(v.size() == result.v_hat.size(), "mahalanobis_d2: dimension mismatch");
  require(result.folds >= 2, "mahalanobis_d2: needs N >= 2");
  const Vector delta = result.v_hat - v;
  Eigen::LDLT<Matrix> ldlt(result.sigma_hat);
  require(ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 0.0,
          "mahalanobis_d2: covariance estimate is singular");
  const double n_eff =
      static_cast<double>(result.n) * static_cast<double>(result.folds - 1) / static_cast<double>(result.folds);
  return std::max(0.0, n_eff * delta.dot(ldlt.solve(delta)));
}

bool confidence_region_contains(const InferenceResult& result, const Vector& v, double level) {
  return mahalanobis_d2(result, v) <= chi2_quantile(static_cast<int>(result.v_hat.size()), level);
}

json inference_result_to_json(const InferenceResult& result, double level, const std::optional<Vector>& v_star) {
  const auto K = result.v_hat.size();
  std::vector<double> sigma;
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index j = 0; j < K; ++j) sigma.push_back(result.sigma_hat(i, j));
  json j{{"v_hat", to_std(result.v_hat)},
         {"sigma_hat", sigma},
         {"n", result.n},
         {"N", result.folds},
         {"level", level},
         {"threshold", chi2_quantile(static_cast<int>(K), level)}};
  if (v_star) {
    j["v_star"] = to_std(*v_star);
    j["d2"] = mahalanobis_d2(result, *v_star);
  }
  return j;
}

}  // namespace cyclic
