// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "latmet/autodiff.hpp"
#include "latmet/core.hpp"

#include <filesystem>
#include <vector>

namespace latmet {

enum class Activation { None = 0, Relu = 1, Tanh = 2 };

struct Layer {
  Matrix w;
  Vector b;
  Activation act = Activation::None;
};

/// Feed-forward scorer: ordered affine layers with elementwise
/// nonlinearities; the final layer emits one score per class. The predicted
/// class is the argmax of the scores, ties resolved to the lowest index.
/// Immutable after construction; safe for concurrent reads.
class FeedForwardClassifier {
 public:
  explicit FeedForwardClassifier(std::vector<Layer> layers);

  int input_dim() const { return input_dim_; }
  int num_classes() const { return num_classes_; }
  const std::vector<Layer>& layers() const { return layers_; }

  Vector scores(const Vector& x) const;
  int classify(const Vector& x) const;

  /// Appends the scoring computation to an autodiff graph.
  ad::NodeId append_expr(ad::Graph& g, ad::NodeId x) const;

 private:
  std::vector<Layer> layers_;
  int input_dim_ = 0;
  int num_classes_ = 0;
};

/// A latent-to-original map the perturbation search can differentiate
/// through.
class LatentDecoder {
 public:
  virtual ~LatentDecoder() = default;
  virtual int latent_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual Vector decode(const Vector& l) const = 0;
  virtual ad::NodeId append_expr(ad::Graph& g, ad::NodeId l) const = 0;
};

/// Class-conditional decoder x = tanh(A l + b); smooth everywhere, outputs
/// in (-1, 1). Requires latent dim strictly below output dim.
class GroundTruthDecoder final : public LatentDecoder {
 public:
  GroundTruthDecoder(int class_index, Matrix a, Vector b);

  int class_index() const { return class_index_; }
  const Matrix& a() const { return a_; }
  const Vector& b() const { return b_; }

  int latent_dim() const override { return static_cast<int>(a_.cols()); }
  int output_dim() const override { return static_cast<int>(a_.rows()); }
  Vector decode(const Vector& l) const override;
  ad::NodeId append_expr(ad::Graph& g, ad::NodeId l) const override;

 private:
  int class_index_;
  Matrix a_;
  Vector b_;
};

/// decode(l) = l; used to run the perturbation search directly in the
/// original space and as the analytic-oracle decoder in tests.
class IdentityDecoder final : public LatentDecoder {
 public:
  explicit IdentityDecoder(int dim);
  int latent_dim() const override { return dim_; }
  int output_dim() const override { return dim_; }
  Vector decode(const Vector& l) const override { return l; }
  ad::NodeId append_expr(ad::Graph& g, ad::NodeId l) const override;

 private:
  int dim_;
};

/// Knobs for inversion-by-optimization. The first restart starts at l = 0,
/// the rest at N(0, I) draws; the step halves whenever the objective would
/// increase and grows slowly on accepted steps.
struct InversionConfig {
  int restarts = 4;
  int steps = 800;
  double initial_step = 0.25;
  double stop_residual = 1e-8;  // on |decode(l) - x|_2
};

struct EncodeResult {
  Vector latent;
  double residual;  // |decode(latent) - x|_2 of the best restart
  std::vector<double> restart_residuals;
  /// Accepted residual per descent step of each restart (non-increasing).
  std::vector<std::vector<double>> traces;
};

/// Decoder plus the encoder realized by multi-restart gradient inversion.
struct GenerativePair {
  GroundTruthDecoder decoder;
  InversionConfig inversion;
};

Vector decode(const GenerativePair& pair, const Vector& l);

/// Best latent across restarts minimizing |decode(l) - x|_2^2. Poor
/// reconstruction is reported through the residual, never raised.
EncodeResult encode(const GenerativePair& pair, const Vector& x, Rng& rng);

// ---------------------------------------------------------------------------
// Model files: magic, format version, kind, dims (m, n_I, n_L), class index,
// layer count, then per layer (rows, cols, activation) and row-major
// little-endian f64 weight blocks followed by the bias block.
// ---------------------------------------------------------------------------

void save_model(const FeedForwardClassifier& model,
                const std::filesystem::path& path);
void save_model(const GroundTruthDecoder& model, int num_classes,
                const std::filesystem::path& path);

FeedForwardClassifier load_classifier(const std::filesystem::path& path);
GroundTruthDecoder load_decoder(const std::filesystem::path& path);

}  // namespace latmet
