// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0

#include "latmet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace latmet::stats {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Lentz's algorithm for the incomplete beta continued fraction.
double betacf(double a, double b, double x) {
  const int max_iter = 300;
  const double eps = 3e-16;
  const double fpmin = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

double normal_quantile(double p) {
  // Bisection on normal_cdf; plenty for confidence levels.
  if (!(p > 0.0 && p < 1.0))
    throw InvalidArgument("normal_quantile: p out of (0,1)");
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (normal_cdf(mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    double mean_rank = 0.5 * (i + j) + 1.0;  // 1-based, averaged over the tie
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

// Returns (r, defined).
std::pair<double, bool> pearson(const std::vector<double>& a,
                                const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return {kNan, false};
  return {sab / std::sqrt(saa * sbb), true};
}

}  // namespace

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0))
    throw InvalidArgument("incomplete beta: a, b must be > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                    a * std::log(x) + b * std::log1p(-x);
  double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, int df) {
  if (df < 1) throw InvalidArgument("student_t_cdf: df must be >= 1");
  double x = df / (df + t * t);
  double tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x);
  return t >= 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, int df) {
  if (!(p > 0.0 && p < 1.0))
    throw InvalidArgument("student_t_quantile: p out of (0,1)");
  if (df < 1) throw InvalidArgument("student_t_quantile: df must be >= 1");
  if (p == 0.5) return 0.0;
  bool upper = p > 0.5;
  double q = upper ? p : 1.0 - p;
  double lo = 0.0, hi = 1.0;
  while (student_t_cdf(hi, df) < q) hi *= 2.0;  // bracket; df=1 tails are fat
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (student_t_cdf(mid, df) < q)
      lo = mid;
    else
      hi = mid;
  }
  double t = 0.5 * (lo + hi);
  return upper ? t : -t;
}

Interval wilson_interval(long successes, long trials, double level) {
  if (trials <= 0) throw InvalidArgument("wilson_interval: trials must be > 0");
  if (successes < 0 || successes > trials)
    throw InvalidArgument("wilson_interval: successes out of range");
  double z = normal_quantile(0.5 + 0.5 * level);
  double n = static_cast<double>(trials);
  double p = static_cast<double>(successes) / n;
  double z2 = z * z;
  double denom = 1.0 + z2 / n;
  double center = (p + z2 / (2.0 * n)) / denom;
  double half =
      z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

Interval t_interval(const std::vector<double>& samples, double level) {
  const auto k = static_cast<long>(samples.size());
  if (k == 0) throw InvalidArgument("t_interval: empty sample");
  double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / k;
  if (k == 1) return {mean, mean};
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  double se = std::sqrt(ss / (k - 1) / k);
  double t = student_t_quantile(0.5 + 0.5 * level, static_cast<int>(k - 1));
  return {mean - t * se, mean + t * se};
}

double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += sign * term;
    if (term < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test_standard_normal(std::vector<double> samples) {
  if (samples.empty()) throw InvalidArgument("ks test: empty sample");
  std::sort(samples.begin(), samples.end());
  const auto n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double f = normal_cdf(samples[i]);
    d = std::max(d, std::fabs(f - (i + 1) / n));
    d = std::max(d, std::fabs(f - i / n));
  }
  double sqrt_n = std::sqrt(n);
  double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
  return {d, kolmogorov_q(lambda)};
}

Correlations correlations(const std::vector<double>& a,
                          const std::vector<double>& b) {
  if (a.size() != b.size())
    throw DimensionError("correlations: length mismatch");
  if (a.size() < 3) throw InvalidArgument("correlations: need length >= 3");
  Correlations out{};
  auto [r, r_ok] = pearson(a, b);
  out.pearson = r;
  out.pearson_defined = r_ok;
  auto [rho, rho_ok] = pearson(average_ranks(a), average_ranks(b));
  out.spearman = rho;
  out.spearman_defined = rho_ok;
  return out;
}

}  // namespace latmet::stats
