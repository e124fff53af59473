#pragma once

#include <span>

namespace cyclic {

/// Regularized lower incomplete gamma P(a, x) for a > 0, x >= 0.
double regularized_lower_gamma(double a, double x);

double chi2_cdf(double x, int dof);

/// Quantile of chi-squared(dof) by bisection on the CDF; dof in [1, 100], p in (0, 1).
double chi2_quantile(int dof, double p);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test of `sample` against chi-squared(dof).
/// The p-value uses the asymptotic Kolmogorov distribution with Stephens' small-n correction.
KsResult ks_test_chi2(std::span<const double> sample, int dof);

/// Survival function of the Kolmogorov distribution, Q(lambda) = 2 sum (-1)^(j-1) exp(-2 j^2 lambda^2).
double kolmogorov_survival(double lambda);

}  // namespace cyclic
