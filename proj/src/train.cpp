// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0

#include "latmet/train.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>

namespace latmet::train {

namespace {

// Stream namespaces under the training rng.
constexpr std::uint64_t kChainBase = 1;  // UT and NR
constexpr std::uint64_t kChainCA = 2;
constexpr std::uint64_t kChainR = 3;
constexpr std::uint64_t kChainB = 4;
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kWorldDecoderStream = 100;
constexpr std::uint64_t kWorldDataStream = 200;

// RMSProp decay and epsilon; the learning-rate schedule comes from
// TrainConfig.
constexpr double kRmsDecay = 0.9;
constexpr double kRmsEps = 1e-8;

struct Mlp {
  std::vector<Matrix> w;
  std::vector<Vector> b;
  std::vector<Matrix> sw;  // RMSProp second-moment accumulators
  std::vector<Vector> sb;

  void reset_optimizer() {
    sw.clear();
    sb.clear();
    for (std::size_t i = 0; i < w.size(); ++i) {
      sw.push_back(Matrix::Zero(w[i].rows(), w[i].cols()));
      sb.push_back(Vector::Zero(b[i].size()));
    }
  }

  FeedForwardClassifier to_classifier() const {
    std::vector<Layer> layers;
    for (std::size_t i = 0; i < w.size(); ++i) {
      Activation act =
          (i + 1 == w.size()) ? Activation::None : Activation::Relu;
      layers.push_back({w[i], b[i], act});
    }
    return FeedForwardClassifier(std::move(layers));
  }

  static Mlp from_classifier(const FeedForwardClassifier& c) {
    Mlp m;
    for (const Layer& layer : c.layers()) {
      m.w.push_back(layer.w);
      m.b.push_back(layer.b);
    }
    m.reset_optimizer();
    return m;
  }

  static Mlp fresh(int input_dim, int hidden_width, int hidden_layers,
                   int num_classes, Rng& rng) {
    Mlp m;
    int in = input_dim;
    for (int i = 0; i < hidden_layers + 1; ++i) {
      int out = (i == hidden_layers) ? num_classes : hidden_width;
      Matrix w(out, in);
      double scale = 1.0 / std::sqrt(static_cast<double>(in));
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c)
          w(r, c) = scale * rng.normal();
      m.w.push_back(std::move(w));
      m.b.push_back(Vector::Zero(out));
      in = out;
    }
    m.reset_optimizer();
    return m;
  }
};

double validation_accuracy(const Mlp& mlp, const metrics::Dataset& val) {
  FeedForwardClassifier c = mlp.to_classifier();
  long ok = 0;
  for (const auto& sample : val)
    if (c.classify(sample.x) == sample.label) ++ok;
  return static_cast<double>(ok) / static_cast<double>(val.size());
}

// Mean cross-entropy over the batch; gradients accumulated into dw/db.
double batch_step(Mlp& mlp, const Matrix& x, const std::vector<int>& labels,
                  double lr) {
  const auto batch = static_cast<int>(labels.size());
  const auto depth = mlp.w.size();

  std::vector<Matrix> pre(depth);   // pre-activation
  std::vector<Matrix> act(depth + 1);
  act[0] = x;
  for (std::size_t i = 0; i < depth; ++i) {
    pre[i] = (mlp.w[i] * act[i]).colwise() + mlp.b[i];
    act[i + 1] = (i + 1 == depth) ? pre[i] : pre[i].cwiseMax(0.0);
  }

  // Softmax cross-entropy on the logits.
  Matrix logits = act[depth];
  Vector col_max = logits.colwise().maxCoeff();
  Matrix shifted = logits.rowwise() - col_max.transpose();
  Matrix expz = shifted.array().exp().matrix();
  Vector denom = expz.colwise().sum();
  double loss = 0.0;
  Matrix grad = expz.array().rowwise() / denom.transpose().array();
  for (int j = 0; j < batch; ++j) {
    double p = grad(labels[j], j);
    loss -= std::log(std::max(p, 1e-300));
    grad(labels[j], j) -= 1.0;
  }
  loss /= batch;
  grad /= static_cast<double>(batch);

  for (std::size_t i = depth; i-- > 0;) {
    Matrix dw = grad * act[i].transpose();
    Vector db = grad.rowwise().sum();
    if (i > 0) {
      grad = mlp.w[i].transpose() * grad;
      grad = (grad.array() * (pre[i - 1].array() > 0.0).cast<double>())
                 .matrix();
    }
    mlp.sw[i] = kRmsDecay * mlp.sw[i] +
                (1.0 - kRmsDecay) * dw.cwiseProduct(dw);
    mlp.sb[i] = kRmsDecay * mlp.sb[i] +
                (1.0 - kRmsDecay) * db.cwiseProduct(db);
    mlp.w[i] -=
        lr * (dw.array() / (mlp.sw[i].array().sqrt() + kRmsEps)).matrix();
    mlp.b[i] -=
        lr * (db.array() / (mlp.sb[i].array().sqrt() + kRmsEps)).matrix();
  }
  return loss;
}

struct RunSpec {
  std::uint64_t chain;
  int epochs;
  bool conventional;
  bool noise;
};

TrainResult run_training(Mlp mlp, const World& world, const TrainConfig& cfg,
                         const RunSpec& spec, const Rng& rng) {
  Rng chain_rng = rng.derive(spec.chain);
  TrainResult result{mlp.to_classifier(), {}};
  // "Had not increased during the previous epoch": the first comparable pair
  // is epoch 2 against epoch 1.
  double prev_val = -1.0;
  const int train_size = static_cast<int>(world.train_set.size());

  for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
    double lr = cfg.learning_rate * std::pow(cfg.lr_decay, epoch - 1);
    Rng data_rng = chain_rng.derive(static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    int batches = 0;

    int remaining = cfg.samples_per_epoch;
    while (remaining > 0) {
      int batch = std::min(cfg.batch_size, remaining);
      remaining -= batch;
      Matrix x(world.pairs[0].decoder.output_dim(), batch);
      std::vector<int> labels(batch);
      for (int j = 0; j < batch; ++j) {
        auto idx = static_cast<int>(data_rng.uniform_int(train_size - 1));
        Vector v = world.train_set[idx].x;
        if (spec.conventional)
          v = augment_conventional(v, cfg.augment, data_rng);
        if (spec.noise) v = augment_noise(v, cfg.noise_sigma, data_rng);
        x.col(j) = v;
        labels[j] = world.train_set[idx].label;
      }
      double loss = batch_step(mlp, x, labels, lr);
      if (!std::isfinite(loss))
        throw NumericError("training diverged at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batches));
      loss_sum += loss;
      ++batches;
    }

    double val_acc = validation_accuracy(mlp, world.val_set);
    result.log.push_back({epoch, loss_sum / batches, val_acc});
    if (cfg.early_stop && val_acc <= prev_val) break;
    prev_val = val_acc;
  }

  result.classifier = mlp.to_classifier();
  return result;
}

}  // namespace

void WorldConfig::validate() const {
  if (num_classes < 2) throw ConfigError("world: num_classes must be >= 2");
  if (latent_dim < 1 || input_dim < 1 || latent_dim >= input_dim)
    throw ConfigError("world: requires 1 <= n_L < n_I");
  if (train_size < 1 || val_size < 1 || test_size < 1)
    throw ConfigError("world: dataset sizes must be >= 1");
  if (!(separation >= 0.0)) throw ConfigError("world: separation must be >= 0");
  if (!decoder_seeds.empty() &&
      static_cast<int>(decoder_seeds.size()) != num_classes)
    throw ConfigError("world: decoder_seeds must have one entry per class");
  if (!label_prior.empty() &&
      static_cast<int>(label_prior.size()) != num_classes)
    throw ConfigError("world: label_prior must have one entry per class");
}

World make_world(const WorldConfig& config, std::uint64_t seed) {
  config.validate();
  Rng base(seed);

  std::vector<GenerativePair> pairs;
  pairs.reserve(config.num_classes);
  for (int i = 0; i < config.num_classes; ++i) {
    Rng ds = config.decoder_seeds.empty()
                 ? base.derive(kWorldDecoderStream + i)
                 : Rng(config.decoder_seeds[i]);
    Matrix a(config.input_dim, config.latent_dim);
    double scale = 1.0 / std::sqrt(static_cast<double>(config.latent_dim));
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = scale * ds.normal();
    Vector b = config.separation * ds.normal_vector(config.input_dim);
    pairs.push_back({GroundTruthDecoder(i, std::move(a), std::move(b)),
                     config.inversion});
  }

  metrics::LabelPrior prior =
      config.label_prior.empty()
          ? metrics::LabelPrior::uniform(config.num_classes)
          : metrics::LabelPrior(Eigen::Map<const Vector>(
                config.label_prior.data(),
                static_cast<Eigen::Index>(config.label_prior.size())));

  auto sample_split = [&](int count, std::uint64_t tag) {
    Rng rng = base.derive(kWorldDataStream + tag);
    metrics::Dataset set;
    set.reserve(count);
    for (int j = 0; j < count; ++j) {
      int label = prior.sample(rng);
      Vector l = rng.normal_vector(config.latent_dim);
      set.push_back({pairs[label].decoder.decode(l), label});
    }
    return set;
  };

  metrics::Dataset train_set = sample_split(config.train_size, 0);
  metrics::Dataset val_set = sample_split(config.val_size, 1);
  metrics::Dataset test_set = sample_split(config.test_size, 2);
  return World{std::move(pairs), prior, std::move(train_set),
               std::move(val_set), std::move(test_set)};
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::UT: return "UT";
    case Variant::NR: return "NR";
    case Variant::CA: return "CA";
    case Variant::R: return "R";
    case Variant::B: return "B";
  }
  throw InvalidArgument("unknown variant");
}

Variant variant_from_name(const std::string& name) {
  if (name == "UT") return Variant::UT;
  if (name == "NR") return Variant::NR;
  if (name == "CA") return Variant::CA;
  if (name == "R") return Variant::R;
  if (name == "B") return Variant::B;
  throw InvalidArgument("unknown variant name: " + name);
}

void TrainConfig::validate() const {
  if (max_epochs < 1 || max_epochs > 8)
    throw ConfigError("train: epochs must be in [1, 8]");
  if (samples_per_epoch < 1)
    throw ConfigError("train: samples_per_epoch must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(learning_rate > 0.0))
    throw ConfigError("train: learning rate must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0))
    throw ConfigError("train: lr_decay must be in (0, 1]");
  if (!(noise_sigma >= 0.0)) throw ConfigError("train: sigma must be >= 0");
  if (!(augment.mask_fraction >= 0.0 && augment.mask_fraction <= 1.0))
    throw ConfigError("train: mask_fraction must be in [0, 1]");
  if (!(augment.gain_range >= 0.0 && augment.gain_range < 1.0))
    throw ConfigError("train: gain_range must be in [0, 1)");
  if (!(augment.shift_range >= 0.0))
    throw ConfigError("train: shift_range must be >= 0");
  if (hidden_width < 1 || hidden_layers < 0)
    throw ConfigError("train: bad architecture");
}

TrainResult train(Variant variant, const World& world,
                  const TrainConfig& config, const Rng& rng) {
  config.validate();
  const int n_i = world.pairs[0].decoder.output_dim();
  const int m = static_cast<int>(world.pairs.size());
  for (const auto* set : {&world.train_set, &world.val_set})
    for (const auto& sample : *set)
      if (sample.label < 0 || sample.label >= m)
        throw InvalidArgument("train: dataset label out of range");

  auto fresh = [&](std::uint64_t chain) {
    Rng init = rng.derive(chain).derive(kInitStream);
    return Mlp::fresh(n_i, config.hidden_width, config.hidden_layers, m, init);
  };

  switch (variant) {
    case Variant::UT:
      return run_training(fresh(kChainBase), world, config,
                          {kChainBase, 1, false, false}, rng);
    case Variant::NR:
      return run_training(fresh(kChainBase), world, config,
                          {kChainBase, config.max_epochs, false, false}, rng);
    case Variant::CA:
      return run_training(fresh(kChainCA), world, config,
                          {kChainCA, config.max_epochs, true, false}, rng);
    case Variant::R: {
      TrainResult nr = train(Variant::NR, world, config, rng);
      return run_training(Mlp::from_classifier(nr.classifier), world, config,
                          {kChainR, config.max_epochs, false, true}, rng);
    }
    case Variant::B: {
      TrainResult ca = train(Variant::CA, world, config, rng);
      return run_training(Mlp::from_classifier(ca.classifier), world, config,
                          {kChainB, config.max_epochs, true, true}, rng);
    }
  }
  throw InvalidArgument("unknown variant");
}

Vector augment_conventional(const Vector& x, const AugmentParams& params,
                            Rng& rng) {
  double gain = rng.uniform(1.0 - params.gain_range, 1.0 + params.gain_range);
  double shift = rng.uniform(-params.shift_range, params.shift_range);
  Vector y = (gain * x.array() + shift).matrix();
  const auto n = x.size();
  auto mask_len =
      static_cast<Eigen::Index>(std::llround(params.mask_fraction * n));
  mask_len = std::clamp<Eigen::Index>(mask_len, 0, n);
  if (mask_len > 0) {
    Eigen::Index start =
        (mask_len < n)
            ? static_cast<Eigen::Index>(rng.uniform_int(
                  static_cast<std::uint64_t>(n - mask_len)))
            : 0;
    y.segment(start, mask_len).setZero();
  }
  return y.cwiseMax(-1.0).cwiseMin(1.0);
}

Vector augment_noise(const Vector& x, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw InvalidArgument("augment_noise: sigma must be >= 0");
  return x + sigma * rng.normal_vector(x.size());
}

}  // namespace latmet::train
