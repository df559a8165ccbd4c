// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0

#include "latmet/attack.hpp"

#include "latmet/noise.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace latmet::attack {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kStallNorm = 1e-12;

struct MarginExpr {
  ad::Graph graph;
  ad::NodeId out = -1;
};

// O(dl) = s(target) - max_{j != target} s(j) at decode(l1 + dl).
MarginExpr make_margin_expr(const FeedForwardClassifier& classifier,
                            const LatentDecoder& decoder, int target,
                            const Vector& l1) {
  const int m = classifier.num_classes();
  if (target < 0 || target >= m)
    throw InvalidArgument("attack: target class out of range");
  check_dim(static_cast<int>(l1.size()) == decoder.latent_dim(),
            "attack: l1 dim mismatch");
  check_dim(decoder.output_dim() == classifier.input_dim(),
            "attack: decoder output does not feed the classifier");

  MarginExpr e;
  ad::NodeId delta = e.graph.input(decoder.latent_dim());
  ad::NodeId shifted = e.graph.add(delta, e.graph.constant(l1));
  ad::NodeId x = decoder.append_expr(e.graph, shifted);
  ad::NodeId s = classifier.append_expr(e.graph, x);

  Matrix drop = Matrix::Zero(m - 1, m);
  for (int j = 0, row = 0; j < m; ++j)
    if (j != target) drop(row++, j) = 1.0;
  ad::NodeId others = e.graph.max_component(
      e.graph.affine(drop, Vector::Zero(m - 1), s));
  e.out = e.graph.sub(e.graph.component(s, target), others);
  return e;
}

// Norm-specific pieces of the PGD step: the unit-step direction (scaled norm
// one), the ball projection, and random interior starts.
struct L2Policy {
  int n;
  double norm(const Vector& v) const { return noise::scaled_norm(v); }
  Vector direction(const Vector& g) const {
    return g / noise::scaled_norm(g);
  }
  Vector project(Vector v, double rho) const {
    double s = norm(v);
    if (s > rho) v *= rho / s;
    return v;
  }
  Vector random_start(double rho, Rng& rng) const {
    Vector z = rng.normal_vector(n);
    double u = rng.uniform();
    double zn = z.norm();
    if (zn < 1e-300) return Vector::Zero(n);
    double radius = rho * std::sqrt(static_cast<double>(n)) *
                    std::pow(u, 1.0 / static_cast<double>(n));
    return z * (radius / zn);
  }
};

struct LinfPolicy {
  int n;
  double norm(const Vector& v) const {
    return v.lpNorm<Eigen::Infinity>() / static_cast<double>(n);
  }
  Vector direction(const Vector& g) const {
    return static_cast<double>(n) *
           g.unaryExpr([](double t) {
             return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0);
           });
  }
  Vector project(Vector v, double rho) const {
    double half_width = rho * static_cast<double>(n);
    return v.cwiseMax(-half_width).cwiseMin(half_width);
  }
  Vector random_start(double rho, Rng& rng) const {
    double half_width = rho * static_cast<double>(n);
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.uniform(-half_width, half_width);
    return v;
  }
};

struct RunOutcome {
  Vector delta;
  double objective = kInf;
  double norm = kInf;
  bool success = false;
  bool stalled = false;
};

template <typename Policy>
RunOutcome run_pgd(const MarginExpr& e, double rho, Vector start, int steps,
                   double step_frac, const Policy& pol, Rng& rng) {
  std::vector<Vector> in{pol.project(std::move(start), rho)};
  ad::Tape tape(e.graph, in);
  double obj = tape.value(e.out);
  bool rerandomized = false;
  bool crossed = false;
  Vector before_cross;  // last iterate with a nonnegative margin
  RunOutcome out;

  for (int t = 0; t < steps && obj >= 0.0; ++t) {
    Vector grad = tape.gradient(e.out);
    if (noise::scaled_norm(grad) < kStallNorm) {
      // One escape attempt from the plateau, then give up on this run.
      if (rerandomized) {
        out.stalled = true;
        break;
      }
      rerandomized = true;
      in[0] = pol.random_start(rho, rng);
      before_cross = Vector();
    } else {
      before_cross = in[0];
      in[0] = pol.project(in[0] - step_frac * rho * pol.direction(grad), rho);
    }
    tape = ad::Tape(e.graph, in);
    obj = tape.value(e.out);
    crossed = obj < 0.0 && before_cross.size() > 0;
  }

  // The margin changed sign somewhere on the last step segment; bisect it to
  // report the crossing point instead of the overshoot. Both endpoints lie in
  // the ball, so the segment does too. Accepted only if it shrinks the norm.
  if (crossed) {
    auto margin_at = [&](const Vector& d) {
      std::vector<Vector> probe{d};
      return ad::Tape(e.graph, probe).value(e.out);
    };
    Vector lo = before_cross;  // margin >= 0
    Vector hi = in[0];         // margin < 0
    for (int it = 0; it < 40; ++it) {
      Vector mid = 0.5 * (lo + hi);
      if (margin_at(mid) < 0.0)
        hi = std::move(mid);
      else
        lo = std::move(mid);
    }
    if (pol.norm(hi) < pol.norm(in[0])) {
      in[0] = std::move(hi);
      obj = margin_at(in[0]);
    }
  }

  out.delta = std::move(in[0]);
  out.objective = obj;
  out.norm = pol.norm(out.delta);
  out.success = obj < 0.0;
  return out;
}

bool misclassified(const FeedForwardClassifier& classifier,
                   const LatentDecoder& decoder, int target, const Vector& l1,
                   const Vector& delta) {
  return classifier.classify(decoder.decode(l1 + delta)) != target;
}

template <typename Policy>
AttackResult min_norm_search(const FeedForwardClassifier& classifier,
                             const LatentDecoder& decoder, int target,
                             const Vector& l1, const AttackConfig& config,
                             const Policy& pol, bool first_from_zero,
                             Rng& rng) {
  config.validate();
  MarginExpr e = make_margin_expr(classifier, decoder, target, l1);
  const int n = decoder.latent_dim();

  AttackResult result;
  result.delta_l = Vector::Zero(n);
  if (misclassified(classifier, decoder, target, l1, result.delta_l)) {
    result.success = true;
    result.scaled_norm = 0.0;
    result.objective = objective(classifier, decoder, target, l1,
                                 result.delta_l);
    return result;
  }

  double rho = config.initial_rho;
  std::optional<RunOutcome> best;
  for (int r = 0; r < config.restarts; ++r) {
    Vector start = (r == 0 && first_from_zero) ? Vector::Zero(n)
                                               : pol.random_start(rho, rng);
    RunOutcome run = run_pgd(e, rho, std::move(start), config.steps,
                             config.step_size, pol, rng);
    result.restarts.push_back(
        {rho, run.norm, run.objective, run.success, run.stalled});
    if (run.success && (!best || run.norm < best->norm)) {
      best = run;
      if (config.shrink) rho = std::min(rho, run.norm);
    }
  }

  if (best) {
    result.delta_l = best->delta;
    result.scaled_norm = best->norm;
    result.objective = best->objective;
    result.success =
        misclassified(classifier, decoder, target, l1, result.delta_l);
  } else {
    result.success = false;
    result.scaled_norm = kInf;
    result.objective =
        objective(classifier, decoder, target, l1, result.delta_l);
  }
  return result;
}

}  // namespace

void AttackConfig::validate() const {
  if (steps < 1) throw ConfigError("attack: steps must be >= 1");
  if (!(step_size > 0.0)) throw ConfigError("attack: step size must be > 0");
  if (restarts < 1) throw ConfigError("attack: restarts must be >= 1");
  if (!(initial_rho > 0.0))
    throw ConfigError("attack: initial rho must be > 0");
  // The ball boundary must be reachable from any interior point.
  if (steps * step_size < 2.0)
    throw ConfigError("attack: steps * step_size must be >= 2");
}

AttackConfig AttackConfig::bounded_defaults() {
  return {50, 0.05, 12, 2.5, false, 0};
}

AttackConfig AttackConfig::min_norm_defaults() {
  return {250, 0.01, 12, 2.5, true, 0};
}

AttackConfig AttackConfig::original_space_defaults() {
  return {50, 0.05, 15, 2.5, true, 0};
}

double objective(const FeedForwardClassifier& classifier,
                 const LatentDecoder& decoder, int target, const Vector& l1,
                 const Vector& delta_l) {
  const int m = classifier.num_classes();
  if (target < 0 || target >= m)
    throw InvalidArgument("objective: target class out of range");
  Vector s = classifier.scores(decoder.decode(l1 + delta_l));
  double others = -kInf;
  for (int j = 0; j < m; ++j)
    if (j != target) others = std::max(others, s[j]);
  return s[target] - others;
}

Vector project_to_ball(const Vector& delta_l, double rho) {
  if (!(rho >= 0.0)) throw InvalidArgument("project_to_ball: rho must be >= 0");
  double s = noise::scaled_norm(delta_l);
  if (s <= rho) return delta_l;
  return delta_l * (rho / s);
}

AttackResult pgd_bounded(const FeedForwardClassifier& classifier,
                         const LatentDecoder& decoder, int target,
                         const Vector& l1, double rho,
                         const AttackConfig& config, Rng& rng) {
  config.validate();
  if (!(rho > 0.0)) throw InvalidArgument("pgd_bounded: rho must be > 0");
  MarginExpr e = make_margin_expr(classifier, decoder, target, l1);
  L2Policy pol{decoder.latent_dim()};

  AttackResult result;
  std::optional<RunOutcome> best;
  for (int r = 0; r < config.restarts; ++r) {
    RunOutcome run = run_pgd(e, rho, pol.random_start(rho, rng), config.steps,
                             config.step_size, pol, rng);
    result.restarts.push_back(
        {rho, run.norm, run.objective, run.success, run.stalled});
    if (!best || run.objective < best->objective) best = run;
  }

  result.delta_l = best->delta;
  result.scaled_norm = best->norm;
  result.objective = best->objective;
  result.success =
      misclassified(classifier, decoder, target, l1, result.delta_l);
  return result;
}

AttackResult pgd_min_norm(const FeedForwardClassifier& classifier,
                          const LatentDecoder& decoder, int target,
                          const Vector& l1, const AttackConfig& config,
                          Rng& rng) {
  L2Policy pol{decoder.latent_dim()};
  return min_norm_search(classifier, decoder, target, l1, config, pol,
                         /*first_from_zero=*/true, rng);
}

double perturbation_norm(const Vector& v, NormKind kind) {
  switch (kind) {
    case NormKind::L2Scaled:
      return noise::scaled_norm(v);
    case NormKind::LinfScaled:
      return v.lpNorm<Eigen::Infinity>() / static_cast<double>(v.size());
  }
  throw InvalidArgument("perturbation_norm: unknown norm kind");
}

AttackResult pgd_original_space(const FeedForwardClassifier& classifier,
                                const Vector& x, int target, NormKind kind,
                                const AttackConfig& config, Rng& rng) {
  check_dim(static_cast<int>(x.size()) == classifier.input_dim(),
            "pgd_original_space: input dim mismatch");
  IdentityDecoder decoder(static_cast<int>(x.size()));
  if (kind == NormKind::L2Scaled) {
    L2Policy pol{static_cast<int>(x.size())};
    return min_norm_search(classifier, decoder, target, x, config, pol,
                           /*first_from_zero=*/true, rng);
  }
  LinfPolicy pol{static_cast<int>(x.size())};
  return min_norm_search(classifier, decoder, target, x, config, pol,
                         /*first_from_zero=*/true, rng);
}

}  // namespace latmet::attack
