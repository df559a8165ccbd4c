// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0

#include "latmet/metrics.hpp"

#include "latmet/noise.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace latmet::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Substream tags inside one sample's stream.
constexpr std::uint64_t kEncodeStream = 1;
constexpr std::uint64_t kAttackStream = 2;
constexpr std::uint64_t kNoiseStream = 3;

MetricEstimate bernoulli_estimate(std::string name,
                                  const std::vector<char>& outcomes) {
  MetricEstimate est;
  est.name = std::move(name);
  est.sample_count = static_cast<int>(outcomes.size());
  long successes = std::count(outcomes.begin(), outcomes.end(), char{1});
  est.value = static_cast<double>(successes) / est.sample_count;
  est.ci = stats::wilson_interval(successes, est.sample_count);
  est.ci_kind = CiKind::Wilson;
  return est;
}

// Mean of the successful rho_hat values; +inf entries are the failures.
MetricEstimate severity_estimate(std::string name,
                                 std::vector<SeverityRecord> records) {
  MetricEstimate est;
  est.name = std::move(name);
  est.sample_count = static_cast<int>(records.size());
  std::vector<double> included;
  included.reserve(records.size());
  for (const SeverityRecord& r : records) {
    if (std::isfinite(r.rho_hat))
      included.push_back(r.rho_hat);
    else
      ++est.failures;
  }
  if (!included.empty()) {
    double sum = 0.0;
    for (double v : included) sum += v;
    est.value = sum / static_cast<double>(included.size());
    est.ci = stats::t_interval(included);
    est.ci_kind = CiKind::StudentT;
  }
  est.records = std::move(records);
  return est;
}

void check_pairs(const FeedForwardClassifier& classifier,
                 const std::vector<GenerativePair>& pairs, int num_classes) {
  if (static_cast<int>(pairs.size()) != num_classes)
    throw DimensionError("metrics: one generative pair per class required");
  for (const GenerativePair& p : pairs)
    check_dim(p.decoder.output_dim() == classifier.input_dim(),
              "metrics: decoder output dim != classifier input dim");
}

void check_labels(const Dataset& dataset, int num_classes) {
  for (std::size_t j = 0; j < dataset.size(); ++j)
    if (dataset[j].label < 0 || dataset[j].label >= num_classes)
      throw InvalidArgument("metrics: sample " + std::to_string(j) +
                            " has label out of range");
}

SeverityRecord make_latent_record(int sample_id, const attack::AttackResult& r,
                                  const GroundTruthDecoder& decoder,
                                  const Vector& l1) {
  SeverityRecord rec;
  rec.sample_id = sample_id;
  rec.success = r.success;
  rec.rho_hat = r.success ? r.scaled_norm : kInf;
  rec.perturbed_norm = noise::scaled_norm(Vector(l1 + r.delta_l));
  Vector dx = decoder.decode(l1 + r.delta_l) - decoder.decode(l1);
  rec.dx_l1 = dx.lpNorm<1>();
  rec.dx_l2 = dx.norm();
  return rec;
}

}  // namespace

LabelPrior::LabelPrior(Vector probabilities) : p_(std::move(probabilities)) {
  if (p_.size() < 2) throw DimensionError("label prior: needs >= 2 classes");
  check_finite(p_, "label prior");
  if (p_.minCoeff() < 0.0)
    throw InvalidArgument("label prior: negative probability");
  if (std::fabs(p_.sum() - 1.0) > 1e-12)
    throw InvalidArgument("label prior: probabilities must sum to 1");
  cdf_.resize(p_.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p_.size(); ++i) {
    acc += p_[i];
    cdf_[i] = acc;
  }
  cdf_[p_.size() - 1] = 1.0;
}

LabelPrior LabelPrior::uniform(int num_classes) {
  if (num_classes < 2) throw DimensionError("label prior: needs >= 2 classes");
  return LabelPrior(
      Vector::Constant(num_classes, 1.0 / static_cast<double>(num_classes)));
}

int LabelPrior::sample(Rng& rng) const {
  double u = rng.uniform();
  for (Eigen::Index i = 0; i < cdf_.size(); ++i)
    if (u < cdf_[i]) return static_cast<int>(i);
  return static_cast<int>(cdf_.size() - 1);
}

double encode_residual_threshold(int input_dim) {
  return 1e-3 * std::sqrt(static_cast<double>(input_dim));
}

MetricEstimate lga(const FeedForwardClassifier& classifier,
                   const std::vector<GenerativePair>& pairs,
                   const LabelPrior& prior, int k, const Rng& rng, int jobs) {
  if (k < 1) throw InvalidArgument("lga: k must be >= 1");
  check_pairs(classifier, pairs, prior.num_classes());
  std::vector<char> ok(k, 0);
  parallel_for(k, jobs, [&](int j) {
    Rng s = rng.derive(static_cast<std::uint64_t>(j));
    int i = prior.sample(s);
    Vector l = s.normal_vector(pairs[i].decoder.latent_dim());
    ok[j] = classifier.classify(pairs[i].decoder.decode(l)) == i;
  });
  return bernoulli_estimate("lga", ok);
}

MetricEstimate lra(const FeedForwardClassifier& classifier,
                   const std::vector<GenerativePair>& pairs,
                   const Dataset& dataset, const Rng& rng, int jobs) {
  if (dataset.empty()) throw InvalidArgument("lra: empty dataset");
  check_pairs(classifier, pairs, classifier.num_classes());
  check_labels(dataset, classifier.num_classes());
  const int n = static_cast<int>(dataset.size());
  const double threshold = encode_residual_threshold(classifier.input_dim());
  std::vector<char> ok(n, 0);
  std::vector<char> flagged(n, 0);
  parallel_for(n, jobs, [&](int j) {
    const LabeledSample& sample = dataset[j];
    Rng s = rng.derive(static_cast<std::uint64_t>(j)).derive(kEncodeStream);
    EncodeResult enc = encode(pairs[sample.label], sample.x, s);
    flagged[j] = enc.residual > threshold;
    ok[j] = classifier.classify(
                pairs[sample.label].decoder.decode(enc.latent)) ==
            sample.label;
  });
  MetricEstimate est = bernoulli_estimate("lra", ok);
  est.flagged = static_cast<int>(
      std::count(flagged.begin(), flagged.end(), char{1}));
  return est;
}

MetricEstimate llna(const FeedForwardClassifier& classifier,
                    const GenerativePair& pair, const Vector& x, int label,
                    double epsilon, int k, const Rng& rng, int jobs) {
  if (k < 1) throw InvalidArgument("llna: k must be >= 1");
  if (!(epsilon >= 0.0)) throw InvalidArgument("llna: epsilon must be >= 0");
  Rng enc_rng = rng.derive(kEncodeStream);
  EncodeResult enc = encode(pair, x, enc_rng);
  std::vector<char> ok(k, 0);
  parallel_for(k, jobs, [&](int j) {
    Rng s = rng.derive(kNoiseStream + 8 + static_cast<std::uint64_t>(j));
    Vector noisy = noise::sample_noisy(enc.latent, epsilon, s);
    ok[j] = classifier.classify(pair.decoder.decode(noisy)) == label;
  });
  MetricEstimate est = bernoulli_estimate("llna", ok);
  est.flagged =
      enc.residual > encode_residual_threshold(classifier.input_dim());
  return est;
}

bool llar_threshold_check(const FeedForwardClassifier& classifier,
                          const GenerativePair& pair, int label,
                          const Vector& l0, double epsilon, double rho,
                          const attack::AttackConfig& config, Rng& rng) {
  Vector l1 = (1.0 - noise::decay_factor(epsilon)) * l0;
  attack::AttackResult res =
      attack::pgd_bounded(classifier, pair.decoder, label, l1, rho, config, rng);
  return !res.success;
}

namespace {

// Shared body of laga/lara: `point` yields (label, l0) for sample j.
template <typename PointFn>
std::vector<MetricEstimate> adversarial_accuracy(
    const std::string& name, const FeedForwardClassifier& classifier,
    const std::vector<GenerativePair>& pairs, double epsilon,
    const std::vector<double>& rhos, int k,
    const attack::AttackConfig& config, const Rng& rng, int jobs,
    const PointFn& point, std::vector<char>* flag_out) {
  if (rhos.empty()) throw InvalidArgument(name + ": empty rho list");
  for (std::size_t r = 1; r < rhos.size(); ++r)
    if (!(rhos[r] > rhos[r - 1]))
      throw InvalidArgument(name + ": rho list must be strictly ascending");
  for (double rho : rhos)
    if (!(rho > 0.0)) throw InvalidArgument(name + ": rho must be > 0");
  config.validate();

  const int num_rhos = static_cast<int>(rhos.size());
  const double decay = noise::decay_factor(epsilon);
  std::vector<char> robust(static_cast<std::size_t>(k) * num_rhos, 0);
  parallel_for(k, jobs, [&](int j) {
    Rng s = rng.derive(static_cast<std::uint64_t>(j));
    auto [label, l0] = point(j, s);
    Vector l1 = (1.0 - decay) * l0;
    bool broken = false;
    for (int r = 0; r < num_rhos; ++r) {
      if (!broken) {
        Rng a = s.derive(kAttackStream + 16 + static_cast<std::uint64_t>(r));
        attack::AttackResult res = attack::pgd_bounded(
            classifier, pairs[label].decoder, label, l1, rhos[r], config, a);
        broken = res.success;
      }
      robust[static_cast<std::size_t>(j) * num_rhos + r] = !broken;
    }
  });

  std::vector<MetricEstimate> out;
  for (int r = 0; r < num_rhos; ++r) {
    std::vector<char> column(k);
    for (int j = 0; j < k; ++j)
      column[j] = robust[static_cast<std::size_t>(j) * num_rhos + r];
    MetricEstimate est = bernoulli_estimate(name, column);
    if (flag_out)
      est.flagged = static_cast<int>(
          std::count(flag_out->begin(), flag_out->end(), char{1}));
    out.push_back(std::move(est));
  }
  return out;
}

}  // namespace

std::vector<MetricEstimate> laga(const FeedForwardClassifier& classifier,
                                 const std::vector<GenerativePair>& pairs,
                                 const LabelPrior& prior, double epsilon,
                                 const std::vector<double>& rhos, int k,
                                 const attack::AttackConfig& config,
                                 const Rng& rng, int jobs) {
  if (k < 1) throw InvalidArgument("laga: k must be >= 1");
  check_pairs(classifier, pairs, prior.num_classes());
  auto point = [&](int /*j*/, Rng& s) {
    int i = prior.sample(s);
    Vector l = s.normal_vector(pairs[i].decoder.latent_dim());
    return std::pair<int, Vector>(i, std::move(l));
  };
  return adversarial_accuracy("laga", classifier, pairs, epsilon, rhos, k,
                              config, rng, jobs, point, nullptr);
}

MetricEstimate laga(const FeedForwardClassifier& classifier,
                    const std::vector<GenerativePair>& pairs,
                    const LabelPrior& prior, double epsilon, double rho, int k,
                    const attack::AttackConfig& config, const Rng& rng,
                    int jobs) {
  return laga(classifier, pairs, prior, epsilon, std::vector<double>{rho}, k,
              config, rng, jobs)[0];
}

std::vector<MetricEstimate> lara(const FeedForwardClassifier& classifier,
                                 const std::vector<GenerativePair>& pairs,
                                 const Dataset& dataset, double epsilon,
                                 const std::vector<double>& rhos,
                                 const attack::AttackConfig& config,
                                 const Rng& rng, int jobs) {
  if (dataset.empty()) throw InvalidArgument("lara: empty dataset");
  check_pairs(classifier, pairs, classifier.num_classes());
  check_labels(dataset, classifier.num_classes());
  const double threshold = encode_residual_threshold(classifier.input_dim());
  std::vector<char> flagged(dataset.size(), 0);
  auto point = [&](int j, Rng& s) {
    const LabeledSample& sample = dataset[j];
    Rng e = s.derive(kEncodeStream);
    EncodeResult enc = encode(pairs[sample.label], sample.x, e);
    flagged[j] = enc.residual > threshold;
    return std::pair<int, Vector>(sample.label, std::move(enc.latent));
  };
  return adversarial_accuracy("lara", classifier, pairs, epsilon, rhos,
                              static_cast<int>(dataset.size()), config, rng,
                              jobs, point, &flagged);
}

MetricEstimate lara(const FeedForwardClassifier& classifier,
                    const std::vector<GenerativePair>& pairs,
                    const Dataset& dataset, double epsilon, double rho,
                    const attack::AttackConfig& config, const Rng& rng,
                    int jobs) {
  return lara(classifier, pairs, dataset, epsilon, std::vector<double>{rho},
              config, rng, jobs)[0];
}

namespace {

template <typename PointFn>
MetricEstimate severity_metric(const std::string& name,
                               const FeedForwardClassifier& classifier,
                               const std::vector<GenerativePair>& pairs,
                               double epsilon, int k,
                               const attack::AttackConfig& config,
                               const Rng& rng, int jobs, const PointFn& point,
                               std::vector<char>* flagged) {
  config.validate();
  const double decay = noise::decay_factor(epsilon);
  std::vector<SeverityRecord> records(k);
  parallel_for(k, jobs, [&](int j) {
    Rng s = rng.derive(static_cast<std::uint64_t>(j));
    auto [label, l0] = point(j, s);
    Vector l1 = (1.0 - decay) * l0;
    Rng a = s.derive(kAttackStream);
    attack::AttackResult res = attack::pgd_min_norm(
        classifier, pairs[label].decoder, label, l1, config, a);
    records[j] = make_latent_record(j, res, pairs[label].decoder, l1);
  });
  MetricEstimate est = severity_estimate(name, std::move(records));
  if (flagged)
    est.flagged =
        static_cast<int>(std::count(flagged->begin(), flagged->end(), char{1}));
  return est;
}

}  // namespace

MetricEstimate lags(const FeedForwardClassifier& classifier,
                    const std::vector<GenerativePair>& pairs,
                    const LabelPrior& prior, double epsilon, int k,
                    const attack::AttackConfig& config, const Rng& rng,
                    int jobs) {
  if (k < 1) throw InvalidArgument("lags: k must be >= 1");
  check_pairs(classifier, pairs, prior.num_classes());
  auto point = [&](int /*j*/, Rng& s) {
    int i = prior.sample(s);
    Vector l = s.normal_vector(pairs[i].decoder.latent_dim());
    return std::pair<int, Vector>(i, std::move(l));
  };
  return severity_metric("lags", classifier, pairs, epsilon, k, config, rng,
                         jobs, point, nullptr);
}

MetricEstimate lars(const FeedForwardClassifier& classifier,
                    const std::vector<GenerativePair>& pairs,
                    const Dataset& dataset, double epsilon,
                    const attack::AttackConfig& config, const Rng& rng,
                    int jobs) {
  if (dataset.empty()) throw InvalidArgument("lars: empty dataset");
  check_pairs(classifier, pairs, classifier.num_classes());
  check_labels(dataset, classifier.num_classes());
  const double threshold = encode_residual_threshold(classifier.input_dim());
  std::vector<char> flagged(dataset.size(), 0);
  auto point = [&](int j, Rng& s) {
    const LabeledSample& sample = dataset[j];
    Rng e = s.derive(kEncodeStream);
    EncodeResult enc = encode(pairs[sample.label], sample.x, e);
    flagged[j] = enc.residual > threshold;
    return std::pair<int, Vector>(sample.label, std::move(enc.latent));
  };
  return severity_metric("lars", classifier, pairs, epsilon,
                         static_cast<int>(dataset.size()), config, rng, jobs,
                         point, &flagged);
}

MetricEstimate clean_accuracy(const FeedForwardClassifier& classifier,
                              const Dataset& dataset, int jobs) {
  if (dataset.empty()) throw InvalidArgument("clean_accuracy: empty dataset");
  check_labels(dataset, classifier.num_classes());
  const int n = static_cast<int>(dataset.size());
  std::vector<char> ok(n, 0);
  parallel_for(n, jobs, [&](int j) {
    ok[j] = classifier.classify(dataset[j].x) == dataset[j].label;
  });
  return bernoulli_estimate("clean_accuracy", ok);
}

MetricEstimate noise_accuracy(const FeedForwardClassifier& classifier,
                              const Dataset& dataset, double sigma,
                              const Rng& rng, int jobs) {
  if (dataset.empty()) throw InvalidArgument("noise_accuracy: empty dataset");
  if (!(sigma >= 0.0))
    throw InvalidArgument("noise_accuracy: sigma must be >= 0");
  check_labels(dataset, classifier.num_classes());
  const int n = static_cast<int>(dataset.size());
  std::vector<char> ok(n, 0);
  parallel_for(n, jobs, [&](int j) {
    Rng s = rng.derive(static_cast<std::uint64_t>(j));
    Vector noisy = dataset[j].x + sigma * s.normal_vector(dataset[j].x.size());
    ok[j] = classifier.classify(noisy) == dataset[j].label;
  });
  return bernoulli_estimate("noise_accuracy", ok);
}

MetricEstimate adversarial_severity(const FeedForwardClassifier& classifier,
                                    const Dataset& dataset,
                                    attack::NormKind kind,
                                    const attack::AttackConfig& config,
                                    const Rng& rng, int jobs) {
  if (dataset.empty())
    throw InvalidArgument("adversarial_severity: empty dataset");
  check_labels(dataset, classifier.num_classes());
  config.validate();
  const int n = static_cast<int>(dataset.size());
  std::vector<SeverityRecord> records(n);
  parallel_for(n, jobs, [&](int j) {
    const LabeledSample& sample = dataset[j];
    Rng a = rng.derive(static_cast<std::uint64_t>(j)).derive(kAttackStream);
    attack::AttackResult res = attack::pgd_original_space(
        classifier, sample.x, sample.label, kind, config, a);
    SeverityRecord rec;
    rec.sample_id = j;
    rec.success = res.success;
    rec.rho_hat = res.success ? res.scaled_norm : kInf;
    rec.perturbed_norm =
        attack::perturbation_norm(Vector(sample.x + res.delta_l), kind);
    rec.dx_l1 = res.delta_l.lpNorm<1>();
    rec.dx_l2 = res.delta_l.norm();
    records[j] = rec;
  });
  std::string name = kind == attack::NormKind::L2Scaled
                         ? "adversarial_severity_l2"
                         : "adversarial_severity_linf";
  return severity_estimate(name, std::move(records));
}

}  // namespace latmet::metrics
