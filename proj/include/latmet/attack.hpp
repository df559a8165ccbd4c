// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0
//
// Untargeted perturbation search with projected gradient descent. The
// objective is the classification margin
//
//     O(dl) = s(i) - max_{j != i} s(j),   s(j) = score_j(decode(l1 + dl)),
//
// so O < 0 means misclassification. Bounded search looks for any
// misclassifying perturbation inside a scaled-norm ball; minimum-norm search
// shrinks the ball onto the smallest perturbation found across restarts.

#pragma once

#include "latmet/core.hpp"
#include "latmet/models.hpp"

#include <vector>

namespace latmet::attack {

struct AttackConfig {
  int steps = 50;
  double step_size = 0.05;  // fraction of the current rho per step
  int restarts = 12;
  double initial_rho = 2.5;
  bool shrink = false;
  std::uint64_t seed = 0;  // used by callers that own no Rng (CLI)

  void validate() const;

  /// Bounded ball search; 12 restarts.
  static AttackConfig bounded_defaults();
  /// Minimum-norm search: small steps from dl = 0, shrinking restarts.
  static AttackConfig min_norm_defaults();
  /// Original-space protocol: 15 shrinking runs of 50 steps at 0.05 rho,
  /// every run from a random point.
  static AttackConfig original_space_defaults();
};

struct RestartTrace {
  double rho;              // ball radius this run searched in
  double final_norm;       // scaled norm of the run's final perturbation
  double final_objective;  // margin at the run's final perturbation
  bool success;
  bool stalled;  // terminated on a vanished gradient
};

struct AttackResult {
  bool success = false;
  Vector delta_l;
  /// Scaled norm of delta_l; +inf when a min-norm search never succeeded.
  double scaled_norm = 0.0;
  double objective = 0.0;
  std::vector<RestartTrace> restarts;
};

/// Margin of class `target` at decode(l1 + delta_l); positive means the
/// classifier still picks `target`.
double objective(const FeedForwardClassifier& classifier,
                 const LatentDecoder& decoder, int target, const Vector& l1,
                 const Vector& delta_l);

/// Projection onto the scaled-norm ball of radius rho: inside points pass
/// through unchanged, outside points are rescaled onto the boundary.
Vector project_to_ball(const Vector& delta_l, double rho);

/// Searches the rho-ball for a misclassifying perturbation. Each restart
/// starts from a random point inside the ball, normalizes the gradient by
/// its scaled norm, and stops early once the margin goes negative. Success
/// is re-verified with classify() on the returned perturbation.
AttackResult pgd_bounded(const FeedForwardClassifier& classifier,
                         const LatentDecoder& decoder, int target,
                         const Vector& l1, double rho,
                         const AttackConfig& config, Rng& rng);

/// Approximately minimum-norm misclassifying perturbation: the first run
/// starts at dl = 0 inside a large ball, each later restart shrinks the ball
/// to the best norm found so far (step size shrinks proportionally) and
/// starts from a random interior point.
AttackResult pgd_min_norm(const FeedForwardClassifier& classifier,
                          const LatentDecoder& decoder, int target,
                          const Vector& l1, const AttackConfig& config,
                          Rng& rng);

enum class NormKind {
  L2Scaled,    // |v|_2 / sqrt(n)
  LinfScaled,  // |v|_inf / n
};

double perturbation_norm(const Vector& v, NormKind kind);

/// Minimum-norm search perturbing x directly; the L2 variant mirrors the
/// latent loop, the Linf variant takes sign-of-gradient steps and projects
/// onto the box. Every run starts from a random point.
AttackResult pgd_original_space(const FeedForwardClassifier& classifier,
                                const Vector& x, int target, NormKind kind,
                                const AttackConfig& config, Rng& rng);

}  // namespace latmet::attack
