#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cyclic/regressors/regressor.hpp"

using namespace cyclic;

namespace {

Matrix random_inputs(int n, int d, Rng& rng) {
  std::uniform_real_distribution<double> u(-2, 2);
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

Matrix design(const Matrix& x, const BasisSpec& basis) {
  Matrix f(x.rows(), basis.feature_dim());
  for (Eigen::Index i = 0; i < x.rows(); ++i) f.row(i) = build_basis(x.row(i).transpose(), basis).transpose();
  return f;
}

}  // namespace

TEST(Basis, QuadraticExamples) {
  EXPECT_EQ(build_basis(Vector::Constant(1, 2.0), BasisSpec::quadratic(1)), (Vector(3) << 1, 2, 4).finished());
  EXPECT_EQ(build_basis((Vector(2) << 1, 2).finished(), BasisSpec::quadratic(2)),
            (Vector(7) << 1, 1, 2, 1, 2, 2, 4).finished());
  Vector zero_out = Vector::Zero(13);
  zero_out[0] = 1;
  EXPECT_EQ(build_basis(Vector::Zero(3), BasisSpec::quadratic(3)), zero_out);
  EXPECT_THROW(build_basis(Vector::Zero(2), BasisSpec::quadratic(3)), Error);
}

TEST(Basis, UniqueQuadraticDropsDuplicates) {
  EXPECT_EQ(build_basis((Vector(2) << 1, 2).finished(), BasisSpec::quadratic_unique(2)),
            (Vector(6) << 1, 1, 2, 1, 2, 4).finished());
}

TEST(Basis, DimensionMatchesDeclaration) {
  Rng rng = make_rng({1});
  for (int d = 1; d <= 8; ++d) {
    const Vector s = random_inputs(1, d, rng).row(0).transpose();
    for (const auto& spec : {BasisSpec::quadratic(d), BasisSpec::quadratic_unique(d), BasisSpec::polynomial(d, 3)}) {
      EXPECT_EQ(build_basis(s, spec).size(), spec.feature_dim());
      EXPECT_EQ(static_cast<int>(basis_monomials(spec).size()), spec.feature_dim());
    }
    EXPECT_EQ(BasisSpec::quadratic(d).feature_dim(), 1 + d + d * d);
    EXPECT_EQ(build_basis(s, BasisSpec::polynomial(d, 2)), build_basis(s, BasisSpec::quadratic(d)));
  }
}

TEST(LinearSieve, RecoversExactCoefficients) {
  Rng rng = make_rng({2});
  const auto basis = BasisSpec::quadratic_unique(2);
  const Matrix x = random_inputs(40, 2, rng);
  const Matrix f = design(x, basis);
  Vector beta(6);
  beta << 0.5, -1, 2, 0.25, -0.75, 1.5;
  const Vector y = f * beta;
  const auto model = fit(LinearSieveSpec{basis, 0.0}, x, y, rng);
  const auto& fitted = std::get<LinearSieveModel>(model.parameters()).coefficients;
  // Independent normal-equations oracle.
  const Vector oracle = (f.transpose() * f).ldlt().solve(f.transpose() * y);
  EXPECT_LE((fitted - oracle).norm() / oracle.norm(), 1e-8);
  EXPECT_LE((fitted - beta).norm() / beta.norm(), 1e-8);
}

TEST(LinearSieve, SingularWithoutRidgeFails) {
  Rng rng = make_rng({3});
  const Matrix x = random_inputs(30, 2, rng);
  // The full quadratic repeats s1 s2, so its normal equations are singular.
  EXPECT_THROW(fit(LinearSieveSpec{BasisSpec::quadratic(2), 0.0}, x, Vector::Ones(30), rng), Error);
  EXPECT_NO_THROW(fit(LinearSieveSpec{BasisSpec::quadratic(2), 1e-6}, x, Vector::Ones(30), rng));
}

TEST(LinearSieve, StationarityResidual) {
  Rng rng = make_rng({4});
  const auto basis = BasisSpec::quadratic(2);
  std::normal_distribution<double> z;
  for (double ridge : {1e-3, 0.1, 10.0}) {
    const Matrix x = random_inputs(50, 2, rng);
    Vector y(50);
    for (auto& v : y) v = z(rng);
    const auto m = fit(LinearSieveSpec{basis, ridge}, x, y, rng);
    const Vector& beta = std::get<LinearSieveModel>(m.parameters()).coefficients;
    const Matrix f = design(x, basis);
    const Vector xty = f.transpose() * y;
    const Vector r = (f.transpose() * f + ridge * Matrix::Identity(f.cols(), f.cols())) * beta - xty;
    EXPECT_LE(r.cwiseAbs().maxCoeff(), 1e-6 * (1 + xty.cwiseAbs().maxCoeff()));
  }
}

TEST(LinearSieve, RidgeShrinksCoefficients) {
  Rng rng = make_rng({5});
  std::normal_distribution<double> z;
  const auto basis = BasisSpec::quadratic_unique(3);
  for (int problem = 0; problem < 20; ++problem) {
    const Matrix x = random_inputs(25, 3, rng);
    Vector y(25);
    for (auto& v : y) v = z(rng);
    double previous = INFINITY;
    for (double ridge : {1e-4, 1e-2, 1.0, 100.0}) {
      const auto m = fit(LinearSieveSpec{basis, ridge}, x, y, rng);
      const double norm = std::get<LinearSieveModel>(m.parameters()).coefficients.norm();
      EXPECT_LE(norm, previous + 1e-12);
      previous = norm;
    }
  }
}

TEST(LinearSieve, ZeroCoefficientsPredictZero) {
  const FittedModel m(LinearSieveModel{BasisSpec::quadratic(2), Vector::Zero(7), 0.0}, 1);
  EXPECT_EQ(m.predict((Vector(2) << 3, -4).finished()), 0.0);
  EXPECT_THROW(m.predict(Vector::Zero(3)), Error);
}

TEST(Regressors, ConstantTargetsReproduced) {
  Rng rng = make_rng({6});
  const Matrix x = random_inputs(60, 2, rng).array().round();
  const Vector y = Vector::Constant(60, 4.25);
  const std::vector<RegressorSpec> specs{LinearSieveSpec{BasisSpec::quadratic_unique(2), 0.0},
                                         RandomForestSpec{}, TabularSpec{}};
  for (const auto& spec : specs) {
    const auto m = fit(spec, x, y, rng);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (std::holds_alternative<RandomForestSpec>(spec))
        EXPECT_EQ(m.predict(x.row(i).transpose()), 4.25);
      else
        EXPECT_NEAR(m.predict(x.row(i).transpose()), 4.25, 1e-8);
    }
  }
}

TEST(Tabular, CellMeansAndDefault) {
  Matrix x(5, 1);
  x << 0, 1, 0, 2, 1;
  Vector y(5);
  y << 1, 10, 3, 7, 20;
  Rng rng = make_rng({7});
  const auto m = fit(TabularSpec{0.0}, x, y, rng);
  EXPECT_EQ(m.predict(Vector::Constant(1, 0)), 2.0);
  EXPECT_EQ(m.predict(Vector::Constant(1, 1)), 15.0);
  EXPECT_EQ(m.predict(Vector::Constant(1, 2)), 7.0);
  EXPECT_EQ(m.predict(Vector::Constant(1, 5)), 0.0);
}

TEST(Forest, PredictionsStayWithinTargetRange) {
  Rng rng = make_rng({8});
  const Matrix x = random_inputs(200, 3, rng);
  Vector y(200);
  for (Eigen::Index i = 0; i < 200; ++i) y[i] = std::sin(3 * x(i, 0)) + x(i, 1) * x(i, 2);
  const auto m = fit(RandomForestSpec{20, 0, 3, 0.5}, x, y, rng);
  const Matrix probe = random_inputs(100, 3, rng) * 2.0;
  for (Eigen::Index i = 0; i < probe.rows(); ++i) {
    const double p = m.predict(probe.row(i).transpose());
    EXPECT_GE(p, y.minCoeff());
    EXPECT_LE(p, y.maxCoeff());
  }
}

TEST(Forest, SampleOrderInvariantUnderSameBootstrapMapping) {
  Rng rng = make_rng({9});
  const int n = 80;
  const Matrix x = random_inputs(n, 2, rng);
  Vector y(n);
  for (int i = 0; i < n; ++i) y[i] = x(i, 0) - 2 * x(i, 1) * x(i, 1);
  const RandomForestSpec spec{10, 0, 2, 1.0};
  Rng crng = make_rng({9, 1});
  const auto counts = draw_bootstrap_counts(n, spec.num_trees, crng);

  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = n - 1 - i;
  Matrix xp(n, 2);
  Vector yp(n);
  auto counts_p = counts;
  for (int i = 0; i < n; ++i) {
    xp.row(i) = x.row(perm[i]);
    yp[i] = y[perm[i]];
    for (std::size_t t = 0; t < counts.size(); ++t) counts_p[t][i] = counts[t][perm[i]];
  }
  Rng r1 = make_rng({9, 2}), r2 = make_rng({9, 2});
  const auto a = fit_forest_with_counts(x, y, counts, spec, r1);
  const auto b = fit_forest_with_counts(xp, yp, counts_p, spec, r2);
  const Matrix probe = random_inputs(50, 2, rng);
  for (Eigen::Index i = 0; i < probe.rows(); ++i)
    EXPECT_NEAR(a.predict(probe.row(i).transpose()), b.predict(probe.row(i).transpose()), 1e-10);
}

TEST(Forest, BootstrapCountsSumToSampleSize) {
  Rng rng = make_rng({10});
  const auto counts = draw_bootstrap_counts(37, 5, rng);
  ASSERT_EQ(counts.size(), 5u);
  for (const auto& c : counts) {
    EXPECT_EQ(c.size(), 37u);
    int total = 0;
    for (int v : c) total += v;
    EXPECT_EQ(total, 37);
  }
}

TEST(FittedModel, JsonRoundTrip) {
  Rng rng = make_rng({11});
  const Matrix x = random_inputs(50, 2, rng);
  const Vector y = x.col(0) + x.col(1).cwiseAbs();
  const std::vector<RegressorSpec> specs{LinearSieveSpec{BasisSpec::quadratic(2), 1e-6},
                                         RandomForestSpec{5, 4, 2, 1.0}, TabularSpec{}};
  for (const auto& spec : specs) {
    const auto m = fit(spec, x, y, rng);
    const auto j = m.to_json();
    EXPECT_EQ(j.at("format_version").get<int>(), FittedModel::format_version);
    const auto back = FittedModel::from_json(j);
    EXPECT_EQ(back.kind(), m.kind());
    for (Eigen::Index i = 0; i < 10; ++i) EXPECT_EQ(back.predict(x.row(i).transpose()), m.predict(x.row(i).transpose()));
  }
}

TEST(Regressors, EmptyInputRejected) {
  Rng rng = make_rng({12});
  EXPECT_THROW(fit(RandomForestSpec{}, Matrix(0, 2), Vector(0), rng), Error);
  EXPECT_THROW(fit(LinearSieveSpec{BasisSpec::quadratic(2), 1.0}, Matrix(0, 2), Vector(0), rng), Error);
}
