// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0

#include "latmet/noise.hpp"

#include <cmath>
#include <numbers>

namespace latmet::noise {

double decay_factor(double epsilon) {
  if (!(epsilon >= 0.0))
    throw InvalidArgument("decay_factor: epsilon must be >= 0");
  return 1.0 - 1.0 / std::sqrt(1.0 + epsilon * epsilon);
}

Vector sample_noisy(const Vector& l, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0))
    throw InvalidArgument("sample_noisy: epsilon must be >= 0");
  Vector dl = rng.normal_vector(l.size());
  return (l + epsilon * dl) / std::sqrt(1.0 + epsilon * epsilon);
}

LikelihoodConstants likelihood_constants(double epsilon, int n_l) {
  if (!(epsilon > 0.0))
    throw InvalidArgument(
        "likelihood: epsilon must be > 0 (density degenerate at 0)");
  if (n_l < 1) throw DimensionError("likelihood: n_l must be >= 1");
  double e2 = epsilon * epsilon;
  LikelihoodConstants k;
  k.c1 = 0.5 * n_l * std::log((1.0 + e2) / (2.0 * std::numbers::pi * e2));
  k.c2 = (1.0 + e2) / (2.0 * e2);
  return k;
}

double log_likelihood(const Vector& delta_l, double epsilon) {
  auto k = likelihood_constants(epsilon, static_cast<int>(delta_l.size()));
  return k.c1 - k.c2 * delta_l.squaredNorm();
}

double g_transform(double tau, double epsilon, int n_l) {
  if (!(tau > 0.0)) throw InvalidArgument("g_transform: tau must be > 0");
  auto k = likelihood_constants(epsilon, n_l);
  double radicand = (k.c1 - std::log(tau)) / (n_l * k.c2);
  // tau == exp(c1) is the maximum attainable density; allow rounding slack
  // around zero, reject anything genuinely above the maximum.
  if (radicand < 0.0) {
    if (radicand > -1e-9) return 0.0;
    throw InvalidArgument("g_transform: tau exceeds the maximum density");
  }
  return std::sqrt(radicand);
}

}  // namespace latmet::noise
