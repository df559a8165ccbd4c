// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0
//
// Sampling estimators for the latent-space performance metrics (LGA, LRA,
// LLNA, LAGA, LARA, LAGS, LARS) and the conventional baselines they are
// compared against. Accuracy-type metrics are Bernoulli means with Wilson
// intervals; severity-type metrics are means of per-point minimum
// perturbation norms with Student-t intervals.
//
// Every estimator derives one RNG substream per sample from the passed
// generator's seed, so results are bit-identical for a fixed seed no matter
// how many worker threads run (`jobs`).

#pragma once

#include "latmet/attack.hpp"
#include "latmet/core.hpp"
#include "latmet/models.hpp"
#include "latmet/stats.hpp"

#include <limits>
#include <string>
#include <vector>

namespace latmet::metrics {

struct LabeledSample {
  Vector x;
  int label = 0;
};

using Dataset = std::vector<LabeledSample>;

/// Class label distribution; probabilities are nonnegative and sum to one.
class LabelPrior {
 public:
  explicit LabelPrior(Vector probabilities);
  static LabelPrior uniform(int num_classes);

  int num_classes() const { return static_cast<int>(p_.size()); }
  double probability(int i) const { return p_[i]; }
  const Vector& probabilities() const { return p_; }
  int sample(Rng& rng) const;

 private:
  Vector p_;
  Vector cdf_;
};

enum class CiKind { None, Wilson, StudentT };

/// Per-point record of a minimum-norm search, the raw material for the
/// severity distribution plots.
struct SeverityRecord {
  int sample_id = 0;
  double rho_hat = 0.0;         // minimal scaled norm found; +inf on failure
  double perturbed_norm = 0.0;  // scaled norm of the perturbed vector
  double dx_l1 = 0.0;           // original-space change, l1 norm
  double dx_l2 = 0.0;           // original-space change, l2 norm
  bool success = false;
};

struct MetricEstimate {
  std::string name;
  double value = std::numeric_limits<double>::quiet_NaN();
  int sample_count = 0;
  stats::Interval ci{std::numeric_limits<double>::quiet_NaN(),
                     std::numeric_limits<double>::quiet_NaN()};
  double ci_level = 0.95;
  CiKind ci_kind = CiKind::None;
  int flagged = 0;   // samples whose encode residual exceeded the threshold
  int failures = 0;  // min-norm searches that never succeeded (excluded)
  std::vector<SeverityRecord> records;  // severity metrics only
};

/// Encode residuals above 1e-3 * sqrt(n_I) mark a sample as poorly
/// reconstructed; such samples stay in the estimate but are counted.
double encode_residual_threshold(int input_dim);

// ---------------------------------------------------------------------------
// Accuracy in the latent space
// ---------------------------------------------------------------------------

/// P(classify(decode_i(l)) = i) for i ~ prior, l ~ N(0, I).
MetricEstimate lga(const FeedForwardClassifier& classifier,
                   const std::vector<GenerativePair>& pairs,
                   const LabelPrior& prior, int k, const Rng& rng,
                   int jobs = 1);

/// P(classify(decode_i(encode_i(x))) = i) over the dataset.
MetricEstimate lra(const FeedForwardClassifier& classifier,
                   const std::vector<GenerativePair>& pairs,
                   const Dataset& dataset, const Rng& rng, int jobs = 1);

/// P(classify(decode_i(l')) = i) over k draws l' ~ noisy(encode_i(x), eps).
MetricEstimate llna(const FeedForwardClassifier& classifier,
                    const GenerativePair& pair, const Vector& x, int label,
                    double epsilon, int k, const Rng& rng, int jobs = 1);

// ---------------------------------------------------------------------------
// Adversarial robustness in the latent space
// ---------------------------------------------------------------------------

/// True iff the bounded search around l1 = (1 - d(eps)) * l0 finds no
/// misclassifying perturbation of scaled norm <= rho.
bool llar_threshold_check(const FeedForwardClassifier& classifier,
                          const GenerativePair& pair, int label,
                          const Vector& l0, double epsilon, double rho,
                          const attack::AttackConfig& config, Rng& rng);

/// P(robust at rho) over generated points, for a strictly ascending rho
/// ladder. Ladder entries share each sample's search budget: once a
/// perturbation is found inside a smaller ball it also breaks every larger
/// ball, which keeps the estimates non-increasing in rho.
std::vector<MetricEstimate> laga(const FeedForwardClassifier& classifier,
                                 const std::vector<GenerativePair>& pairs,
                                 const LabelPrior& prior, double epsilon,
                                 const std::vector<double>& rhos, int k,
                                 const attack::AttackConfig& config,
                                 const Rng& rng, int jobs = 1);
MetricEstimate laga(const FeedForwardClassifier& classifier,
                    const std::vector<GenerativePair>& pairs,
                    const LabelPrior& prior, double epsilon, double rho, int k,
                    const attack::AttackConfig& config, const Rng& rng,
                    int jobs = 1);

/// Reconstruction variant of laga: points come from the dataset via encode.
std::vector<MetricEstimate> lara(const FeedForwardClassifier& classifier,
                                 const std::vector<GenerativePair>& pairs,
                                 const Dataset& dataset, double epsilon,
                                 const std::vector<double>& rhos,
                                 const attack::AttackConfig& config,
                                 const Rng& rng, int jobs = 1);
MetricEstimate lara(const FeedForwardClassifier& classifier,
                    const std::vector<GenerativePair>& pairs,
                    const Dataset& dataset, double epsilon, double rho,
                    const attack::AttackConfig& config, const Rng& rng,
                    int jobs = 1);

/// Mean minimal scaled perturbation norm over generated points. Failed
/// searches are excluded from the mean and counted in `failures`.
MetricEstimate lags(const FeedForwardClassifier& classifier,
                    const std::vector<GenerativePair>& pairs,
                    const LabelPrior& prior, double epsilon, int k,
                    const attack::AttackConfig& config, const Rng& rng,
                    int jobs = 1);

/// Reconstruction variant of lags.
MetricEstimate lars(const FeedForwardClassifier& classifier,
                    const std::vector<GenerativePair>& pairs,
                    const Dataset& dataset, double epsilon,
                    const attack::AttackConfig& config, const Rng& rng,
                    int jobs = 1);

// ---------------------------------------------------------------------------
// Conventional baselines
// ---------------------------------------------------------------------------

MetricEstimate clean_accuracy(const FeedForwardClassifier& classifier,
                              const Dataset& dataset, int jobs = 1);

/// Accuracy on x + sigma * N(0, I), one corruption per sample.
MetricEstimate noise_accuracy(const FeedForwardClassifier& classifier,
                              const Dataset& dataset, double sigma,
                              const Rng& rng, int jobs = 1);

/// Mean minimal original-space perturbation norm (already-misclassified
/// points contribute zero; failures are excluded and counted).
MetricEstimate adversarial_severity(const FeedForwardClassifier& classifier,
                                    const Dataset& dataset,
                                    attack::NormKind kind,
                                    const attack::AttackConfig& config,
                                    const Rng& rng, int jobs = 1);

using stats::Correlations;
using stats::correlations;

}  // namespace latmet::metrics
