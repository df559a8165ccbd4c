// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0
//
// Distribution-preserving Gaussian latent noise. A latent vector drawn from
// N(0, I) stays N(0, I)-distributed after noise is applied:
//
//     l' = (l + eps * dl) / sqrt(1 + eps^2),   dl ~ N(0, I).
//
// Equivalently, l' ~ N(l / sqrt(1 + eps^2), eps^2 / (1 + eps^2) * I); the
// additive part is the perturbation whose log density is
// c1(eps) - c2(eps) * |dl|_2^2. The whole module works with noise magnitude
// eps >= 0; densities exist only for eps > 0.

#pragma once

#include "latmet/core.hpp"

#include <cmath>

namespace latmet::noise {

/// Shrinkage applied to the unperturbed vector: d = 1 - 1/sqrt(1 + eps^2).
double decay_factor(double epsilon);

/// One draw of l' = (l + eps * dl) / sqrt(1 + eps^2). eps = 0 returns l
/// exactly (the draw is still consumed, keeping streams aligned across eps).
Vector sample_noisy(const Vector& l, double epsilon, Rng& rng);

struct LikelihoodConstants {
  double c1;  // n_L * log sqrt((1 + eps^2) / (2 pi eps^2))
  double c2;  // (1 + eps^2) / (2 eps^2)
};

/// Requires epsilon > 0 (the density is degenerate at 0) and n_l >= 1.
LikelihoodConstants likelihood_constants(double epsilon, int n_l);

/// log density of the perturbation delta_l: c1 - c2 * |delta_l|^2.
double log_likelihood(const Vector& delta_l, double epsilon);

/// Converts a likelihood threshold tau into the scaled-norm radius rho such
/// that perturbations with density >= tau are exactly those with scaled norm
/// <= rho. Requires 0 < tau <= exp(c1).
double g_transform(double tau, double epsilon, int n_l);

/// l2 norm divided by sqrt(dimension); a standard Gaussian vector has
/// expected squared scaled norm 1.
template <typename Derived>
double scaled_norm(const Eigen::MatrixBase<Derived>& v) {
  return v.norm() / std::sqrt(static_cast<double>(v.size()));
}

}  // namespace latmet::noise
