#include <cmath>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "cyclic/envs/linear_env.hpp"
#include "cyclic/envs/registry.hpp"
#include "cyclic/inference/chi2.hpp"
#include "cyclic/inference/sieve.hpp"

using namespace cyclic;

namespace {

// 1, s_i, s_i s_j (i <= j), written out by hand.
Vector quad_unique(const Vector& s) {
  std::vector<double> f{1.0};
  for (Eigen::Index i = 0; i < s.size(); ++i) f.push_back(s[i]);
  for (Eigen::Index i = 0; i < s.size(); ++i)
    for (Eigen::Index j = i; j < s.size(); ++j) f.push_back(s[i] * s[j]);
  return from_std(f);
}

InferenceResult make_result(Vector v_hat, Matrix sigma, std::size_t n, int folds) {
  InferenceResult r;
  r.v_hat = std::move(v_hat);
  r.sigma_hat = std::move(sigma);
  r.n = n;
  r.folds = folds;
  return r;
}

Matrix random_spd(int k, Rng& rng) {
  std::normal_distribution<double> z;
  Matrix a(k, k);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = z(rng);
  return a * a.transpose() + 0.1 * Matrix::Identity(k, k);
}

}  // namespace

TEST(Chi2, QuantileExamples) {
  EXPECT_NEAR(chi2_quantile(3, 0.95), 7.8147, 1e-4);
  EXPECT_NEAR(chi2_quantile(1, 0.95), 3.8415, 1e-4);
  EXPECT_NEAR(chi2_quantile(2, 1.0 - std::exp(-1.0)), 2.0, 1e-9);
}

TEST(Chi2, MatchesBoostReference) {
  for (int dof : {1, 2, 3, 4, 7, 12, 30, 100})
    for (double p : {0.01, 0.1, 0.5, 0.9, 0.95, 0.99, 0.999}) {
      const boost::math::chi_squared_distribution<double> ref(dof);
      const double q = boost::math::quantile(ref, p);
      EXPECT_NEAR(chi2_quantile(dof, p), q, 1e-8 * (1 + q)) << dof << " " << p;
      EXPECT_NEAR(chi2_cdf(q, dof), p, 1e-10);
    }
  EXPECT_THROW(chi2_quantile(0, 0.5), Error);
  EXPECT_THROW(chi2_quantile(3, 1.0), Error);
}

TEST(Chi2, KolmogorovTail) {
  EXPECT_NEAR(kolmogorov_survival(1.3581), 0.05, 1e-4);
  EXPECT_NEAR(kolmogorov_survival(1.6276), 0.01, 1e-4);
  EXPECT_EQ(kolmogorov_survival(0.0), 1.0);
}

TEST(Chi2, KsAcceptsMatchingAndRejectsWrongDistribution) {
  Rng rng = make_rng({1});
  std::chi_squared_distribution<double> three(3.0), six(6.0);
  std::vector<double> good(500), bad(500);
  for (auto& v : good) v = three(rng);
  for (auto& v : bad) v = six(rng);
  EXPECT_GT(ks_test_chi2(good, 3).p_value, 0.01);
  EXPECT_LT(ks_test_chi2(bad, 3).p_value, 1e-6);
  // Statistic against a hand-computed ECDF distance.
  const std::vector<double> pts{1.0, 2.0, 5.0};
  double d = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double f = boost::math::cdf(boost::math::chi_squared_distribution<double>(3), pts[i]);
    d = std::max({d, (i + 1) / 3.0 - f, f - i / 3.0});
  }
  EXPECT_NEAR(ks_test_chi2(pts, 3).statistic, d, 1e-10);
}

TEST(Mahalanobis, ExampleAndHomogeneity) {
  const auto r = make_result((Vector(3) << 0.5, 0, 0).finished(), Matrix::Identity(3, 3), 200, 2);
  EXPECT_NEAR(mahalanobis_d2(r, Vector::Zero(3)), 25.0, 1e-12);
  EXPECT_EQ(mahalanobis_d2(r, r.v_hat), 0.0);
  Rng rng = make_rng({2});
  const auto r2 = make_result((Vector(3) << 1, -2, 0.5).finished(), random_spd(3, rng), 90, 3);
  const Vector v = (Vector(3) << 0.2, 0.1, -0.4).finished();
  const double base = mahalanobis_d2(r2, v);
  for (double c : {0.5, 2.0, 3.0}) {
    const Vector vc = r2.v_hat - c * (r2.v_hat - v);
    EXPECT_NEAR(mahalanobis_d2(r2, vc), c * c * base, 1e-9 * c * c * base);
  }
  const Matrix s = random_spd(3, rng);
  const Vector delta = r2.v_hat - v;
  const double oracle = 90.0 * 2.0 / 3.0 * delta.dot(s.llt().solve(delta));
  EXPECT_NEAR(mahalanobis_d2(make_result(r2.v_hat, s, 90, 3), v), oracle, 1e-9 * oracle);
  EXPECT_TRUE(confidence_region_contains(r, (Vector(3) << 0.4, 0, 0).finished(), 0.95));
  EXPECT_FALSE(confidence_region_contains(r, Vector::Zero(3), 0.95));
}

TEST(SieveFeatures, PsiAndUExamples) {
  const auto basis = BasisSpec::quadratic_unique(1);
  const Vector s = Vector::Constant(1, 2.0);
  EXPECT_EQ(local_feature_psi(s, 1, basis, 3), (Vector(9) << 0, 0, 0, 1, 2, 4, 0, 0, 0).finished());
  EXPECT_EQ(policy_weighted_u(s, basis, (Vector(2) << 0.25, 0.75).finished()),
            (Vector(6) << 0.25, 0.5, 1, 0.75, 1.5, 3).finished());
  EXPECT_THROW(local_feature_psi(s, 3, basis, 3), Error);
}

TEST(SieveSystem, SingleSampleOuterProduct) {
  const auto env = make_environment("linear");
  const auto layout = SieveLayout::build(env.spec, BasisSpec::quadratic_unique(1));
  EXPECT_EQ(layout.offsets, (std::vector<int>{0, 6, 18}));
  EXPECT_EQ(layout.total_dim, 30);
  Rng rng = make_rng({3});
  Transition tr;
  tr.stage = 0;
  tr.state = Vector::Constant(1, 0.7);
  tr.action = 1;
  const auto step = env.spec.step(0, tr.state, 1, rng);
  tr.reward = step.reward;
  tr.next_state = step.next_state;
  tr.terminal = env.spec.is_terminal(0, tr.state, 1);
  ASSERT_TRUE(tr.terminal);
  Dataset data(3);
  for (int k = 0; k < 3; ++k) data[k].stage = k;
  data[0].transitions.push_back(tr);
  const auto policy = PolicyVector::uniform(env.spec);
  const auto sys = assemble_global_system(data, policy, layout, env.spec);

  Vector psi = Vector::Zero(30);
  psi.segment(3, 3) = quad_unique(tr.state);
  Vector cont = Vector::Zero(30);
  const Vector phi_next = quad_unique(env.spec.map_to_next_stage(0, tr.next_state));
  cont.segment(6, 6) = 0.9 * 0.5 * phi_next;
  cont.segment(12, 6) = 0.9 * 0.5 * phi_next;
  const Matrix oracle = psi * (psi - cont).transpose();
  EXPECT_LE((sys.H - oracle).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((sys.b - psi * tr.reward).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SieveSystem, BlockSparsity) {
  const auto env = make_environment("linear");
  Rng rng = make_rng({4});
  const auto data = sample_offline_dataset(env.spec, PolicyVector::uniform(env.spec), 100, env.sampling, rng);
  const auto layout = SieveLayout::build(env.spec, BasisSpec::quadratic_unique(1));
  const auto sys = assemble_global_system(data, PolicyVector::uniform(env.spec), layout, env.spec);
  for (int k = 0; k < 3; ++k) {
    const int next = (k + 1) % 3;
    const int rows = layout.stage_dim(k);
    for (int j = 0; j < 3; ++j) {
      if (j == k || j == next) continue;
      EXPECT_EQ(sys.H.block(layout.offsets[k], layout.offsets[j], rows, layout.stage_dim(j)).cwiseAbs().maxCoeff(), 0.0);
    }
    // Rows of different actions in the same stage never share columns of their own block.
    const int L = layout.feature_dim(k);
    EXPECT_EQ(sys.H.block(layout.block_offset(k, 0), layout.block_offset(k, 1), L, L).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(SieveSystem, SolveBeta) {
  GlobalSystem sys;
  sys.H = Matrix::Identity(4, 4);
  sys.b = (Vector(4) << 1, 2, 3, 4).finished();
  sys.n = 10;
  EXPECT_EQ(solve_beta(sys), sys.b);
  sys.H(3, 3) = 0.0;
  EXPECT_THROW(solve_beta(sys), Error);
}

TEST(SieveCovariance, PositiveSemidefinite) {
  const auto env = make_environment("linear");
  InferenceConfig cfg;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng = make_rng({5, seed});
    const auto data = sample_offline_dataset(env.spec, PolicyVector::uniform(env.spec), 200, env.sampling, rng);
    const auto est = sieve_evaluate(data, PolicyVector::uniform(env.spec), env.spec, cfg, rng);
    EXPECT_LE((est.sigma_hat - est.sigma_hat.transpose()).cwiseAbs().maxCoeff(), 0.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(est.sigma_hat);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10 * est.sigma_hat.trace());
  }
}

TEST(SieveEstimate, RecoversLinearEnvironmentValues) {
  const auto params = draw_linear_env_params(11);
  const auto spec = make_linear_env(params);
  const auto opt = solve_linear_env(params);
  const auto policy = constant_action_policy(opt.actions, {2, 2, 2});
  Rng rng = make_rng({6});
  const auto data = sample_offline_dataset(spec, PolicyVector::uniform(spec), 20000, SamplingConfig{}, rng);
  InferenceConfig cfg;
  const auto est = sieve_evaluate(data, policy, spec, cfg, rng);
  const double n = static_cast<double>(total_transitions(data));
  for (int k = 0; k < 3; ++k) {
    const double se = std::sqrt(est.sigma_hat(k, k) / n);
    EXPECT_LE(std::abs(est.v_hat[k] - opt.values[k]), 4.0 * se) << "stage " << k;
  }
}

TEST(SymmetricRoots, SquareAndInverse) {
  Rng rng = make_rng({7});
  for (int k : {1, 3, 5}) {
    const Matrix m = random_spd(k, rng);
    const Matrix r = symmetric_sqrt(m);
    EXPECT_LE((r * r - m).cwiseAbs().maxCoeff(), 1e-10 * m.norm());
    EXPECT_LE((r - r.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    const Matrix ri = symmetric_inverse_sqrt(m);
    EXPECT_LE((ri * m * ri - Matrix::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Aggregation, TwoFoldsIsIdentity) {
  Rng rng = make_rng({8});
  FoldEstimate e{(Vector(3) << 1, 2, 3).finished(), random_spd(3, rng), 50};
  const auto r = aggregate_folds({e}, 100, 2);
  EXPECT_LE((r.v_hat - e.v_hat).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((r.sigma_hat - e.sigma_hat).cwiseAbs().maxCoeff(), 1e-10 * e.sigma_hat.norm());
  EXPECT_EQ(r.n, 100u);
  EXPECT_THROW(aggregate_folds({e, e}, 100, 2), Error);
}

TEST(Aggregation, IdenticalFoldsAggregateToThemselves) {
  Rng rng = make_rng({9});
  FoldEstimate e{(Vector(2) << -1, 4).finished(), random_spd(2, rng), 30};
  const auto r = aggregate_folds({e, e, e}, 120, 4);
  EXPECT_LE((r.v_hat - e.v_hat).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((r.sigma_hat - e.sigma_hat).cwiseAbs().maxCoeff(), 1e-10 * e.sigma_hat.norm());
}

TEST(Aggregation, ScalarCaseIsPrecisionWeighted) {
  // For K = 1: v = (sum v_i / sigma_i) / (sum 1 / sigma_i) with sigma_i the standard deviations.
  FoldEstimate a{Vector::Constant(1, 1.0), Matrix::Constant(1, 1, 4.0), 10};
  FoldEstimate b{Vector::Constant(1, 4.0), Matrix::Constant(1, 1, 1.0), 10};
  const auto r = aggregate_folds({a, b}, 30, 3);
  EXPECT_NEAR(r.v_hat[0], (1.0 / 2.0 + 4.0 / 1.0) / (1.0 / 2.0 + 1.0), 1e-12);
  EXPECT_NEAR(r.sigma_hat(0, 0), std::pow(1.0 / ((0.5 + 1.0) / 2.0), 2), 1e-12);
}

TEST(Folds, PartitionIsBalancedAndComplete) {
  const auto env = make_environment("linear");
  Rng rng = make_rng({10});
  const auto data = sample_offline_dataset(env.spec, PolicyVector::uniform(env.spec), 101, env.sampling, rng);
  Rng split = make_rng({10, 1});
  const auto folds = partition_folds(data, 4, split);
  ASSERT_EQ(folds.size(), 4u);
  for (int k = 0; k < 3; ++k) {
    std::vector<double> all, merged;
    for (const auto& tr : data[k].transitions) all.push_back(tr.reward);
    for (const auto& f : folds) {
      EXPECT_GE(f[k].size(), 25u);
      EXPECT_LE(f[k].size(), 26u);
      for (const auto& tr : f[k].transitions) merged.push_back(tr.reward);
    }
    std::sort(all.begin(), all.end());
    std::sort(merged.begin(), merged.end());
    EXPECT_EQ(all, merged);
  }
  Rng r2 = make_rng({10, 2});
  EXPECT_THROW(partition_folds(data, 1, r2), Error);
}
