// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic world construction with known ground-truth decoders, and the
// five classifier training variants:
//
//   UT  undertrained: one epoch, no augmentation
//   NR  non-robust:   up to eight epochs, no augmentation (UT is its
//                     bit-exact one-epoch prefix)
//   CA  conventional augmentation, trained from scratch
//   R   Gaussian-noise augmentation, started from NR
//   B   conventional then noise augmentation, started from CA
//
// Training is minibatch RMSProp on softmax cross-entropy with the learning
// rate multiplied by a decay factor after each epoch, stopping early when
// validation accuracy fails to increase over the previous epoch.

#pragma once

#include "latmet/core.hpp"
#include "latmet/metrics.hpp"
#include "latmet/models.hpp"

#include <string>
#include <vector>

namespace latmet::train {

struct WorldConfig {
  int num_classes = 3;
  int latent_dim = 8;
  int input_dim = 32;
  /// Scale of the per-class bias shift between decoders.
  double separation = 0.35;
  int train_size = 2000;
  int val_size = 500;
  int test_size = 500;
  /// One seed per class; empty derives them from the world seed. Identical
  /// entries (with separation 0) give indistinguishable classes.
  std::vector<std::uint64_t> decoder_seeds;
  /// Empty means uniform.
  std::vector<double> label_prior;
  InversionConfig inversion;

  void validate() const;
};

struct World {
  std::vector<GenerativePair> pairs;
  metrics::LabelPrior prior;
  metrics::Dataset train_set;
  metrics::Dataset val_set;
  metrics::Dataset test_set;
};

/// Per-class decoders with A entries ~ N(0, 1/n_L) and b = separation * z,
/// z ~ N(0, I); data sampled as x = decode_i(l), l ~ N(0, I), i ~ prior.
/// Bit-identical for a fixed seed.
World make_world(const WorldConfig& config, std::uint64_t seed);

enum class Variant { UT, NR, CA, R, B };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct AugmentParams {
  double gain_range = 0.1;    // gain ~ U[1 - range, 1 + range]
  double shift_range = 0.05;  // shift ~ U[-range, range]
  double mask_fraction = 0.1;  // contiguous zeroed fraction
};

struct TrainConfig {
  int max_epochs = 8;
  int samples_per_epoch = 10000;
  int batch_size = 64;
  double learning_rate = 4e-4;
  double lr_decay = 0.75;
  bool early_stop = true;
  double noise_sigma = 0.8;
  AugmentParams augment;
  int hidden_width = 64;
  int hidden_layers = 2;

  void validate() const;
};

struct EpochLog {
  int epoch;
  double train_loss;
  double val_accuracy;
};

struct TrainResult {
  FeedForwardClassifier classifier;
  std::vector<EpochLog> log;  // epochs of this variant's own run
};

/// Trains one variant; lineage prerequisites (NR for R, CA for B) are
/// trained internally from the same rng so shared prefixes are bit-exact.
/// Divergence (non-finite loss) raises NumericError naming epoch and step.
TrainResult train(Variant variant, const World& world,
                  const TrainConfig& config, const Rng& rng);

/// clamp(gain * x + shift, -1, 1) with a contiguous coordinate block zeroed
/// before clamping.
Vector augment_conventional(const Vector& x, const AugmentParams& params,
                            Rng& rng);

/// x + sigma * N(0, I); intentionally unclamped.
Vector augment_noise(const Vector& x, double sigma, Rng& rng);

}  // namespace latmet::train
