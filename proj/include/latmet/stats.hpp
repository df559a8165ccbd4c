// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "latmet/core.hpp"

#include <vector>

namespace latmet::stats {

double normal_cdf(double x);

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

/// CDF of Student's t with df degrees of freedom.
double student_t_cdf(double t, int df);

/// Quantile of Student's t; p in (0, 1), df >= 1. Bisection on the CDF.
double student_t_quantile(double p, int df);

struct Interval {
  double lo;
  double hi;
};

/// Wilson score interval for a Bernoulli proportion at the given confidence
/// level (default 95%).
Interval wilson_interval(long successes, long trials, double level = 0.95);

/// Student-t interval for a sample mean.
Interval t_interval(const std::vector<double>& samples, double level = 0.95);

/// Complementary CDF of the Kolmogorov distribution,
/// Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2).
double kolmogorov_q(double lambda);

struct KsResult {
  double statistic;
  double p_value;
};

/// One-sample Kolmogorov-Smirnov test of `samples` against N(0, 1).
KsResult ks_test_standard_normal(std::vector<double> samples);

struct Correlations {
  double pearson;
  double spearman;
  bool pearson_defined;   // false when a series has zero variance
  bool spearman_defined;  // false when a series has constant ranks
};

/// Sample Pearson r and Spearman rho (average ranks on ties). Requires equal
/// lengths >= 3. Undefined coefficients are NaN with the flag cleared.
Correlations correlations(const std::vector<double>& a,
                          const std::vector<double>& b);

}  // namespace latmet::stats
