// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "latmet/metrics.hpp"
#include "latmet/train.hpp"

#include <cmath>
#include <vector>

using namespace latmet;
using train::TrainConfig;
using train::Variant;
using train::WorldConfig;

namespace {

WorldConfig small_world_config() {
  WorldConfig cfg;
  cfg.num_classes = 2;
  cfg.latent_dim = 2;
  cfg.input_dim = 12;
  cfg.separation = 4.0;
  cfg.train_size = 400;
  cfg.val_size = 120;
  cfg.test_size = 120;
  return cfg;
}

TrainConfig quick_train_config() {
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.samples_per_epoch = 2000;
  cfg.hidden_width = 16;
  return cfg;
}

bool same_weights(const FeedForwardClassifier& a,
                  const FeedForwardClassifier& b) {
  if (a.layers().size() != b.layers().size()) return false;
  for (std::size_t i = 0; i < a.layers().size(); ++i)
    if (a.layers()[i].w != b.layers()[i].w ||
        a.layers()[i].b != b.layers()[i].b)
      return false;
  return true;
}

}  // namespace

TEST_CASE("worlds regenerate bit-identically from the same seed") {
  WorldConfig cfg = small_world_config();
  train::World a = train::make_world(cfg, 91);
  train::World b = train::make_world(cfg, 91);
  REQUIRE(a.train_set.size() == b.train_set.size());
  for (std::size_t j = 0; j < a.train_set.size(); ++j) {
    CHECK(a.train_set[j].label == b.train_set[j].label);
    CHECK(a.train_set[j].x == b.train_set[j].x);
  }
  for (int i = 0; i < cfg.num_classes; ++i) {
    CHECK(a.pairs[i].decoder.a() == b.pairs[i].decoder.a());
    CHECK(a.pairs[i].decoder.b() == b.pairs[i].decoder.b());
  }
  train::World c = train::make_world(cfg, 92);
  CHECK(a.pairs[0].decoder.a() != c.pairs[0].decoder.a());
}

TEST_CASE("zero separation with shared decoder seeds collapses the classes") {
  WorldConfig cfg = small_world_config();
  cfg.separation = 0.0;
  cfg.decoder_seeds = {77, 77};
  train::World world = train::make_world(cfg, 5);
  CHECK(world.pairs[0].decoder.a() == world.pairs[1].decoder.a());
  CHECK(world.pairs[0].decoder.b().isZero(0.0));
  CHECK(world.pairs[1].decoder.b().isZero(0.0));

  // Identical class-conditional data: any fixed classifier is at chance.
  Rng rng(6);
  Matrix w(2, cfg.input_dim);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < cfg.input_dim; ++c) w(r, c) = rng.normal();
  FeedForwardClassifier any({{w, Vector::Zero(2), Activation::None}});
  auto acc = metrics::clean_accuracy(any, world.test_set);
  CHECK(acc.value > 0.35);
  CHECK(acc.value < 0.65);
}

TEST_CASE("a separable world trains to high validation accuracy") {
  WorldConfig wcfg = small_world_config();
  train::World world = train::make_world(wcfg, 7);
  TrainConfig tcfg;
  tcfg.samples_per_epoch = 4000;
  tcfg.hidden_width = 16;
  Rng rng(8);
  train::TrainResult nr = train::train(Variant::NR, world, tcfg, rng);
  REQUIRE_FALSE(nr.log.empty());
  CHECK(nr.log.back().val_accuracy >= 0.95);
}

TEST_CASE("UT is the bit-exact one-epoch prefix of NR") {
  WorldConfig wcfg = small_world_config();
  train::World world = train::make_world(wcfg, 9);
  TrainConfig cfg = quick_train_config();
  Rng rng(10);
  train::TrainResult ut = train::train(Variant::UT, world, cfg, rng);
  TrainConfig one_epoch = cfg;
  one_epoch.max_epochs = 1;
  train::TrainResult nr1 = train::train(Variant::NR, world, one_epoch, rng);
  CHECK(same_weights(ut.classifier, nr1.classifier));
  CHECK(ut.log.size() == 1);
}

TEST_CASE("UT never beats NR on clean accuracy for the same seed") {
  WorldConfig wcfg = small_world_config();
  train::World world = train::make_world(wcfg, 11);
  TrainConfig cfg = quick_train_config();
  Rng rng(12);
  train::TrainResult ut = train::train(Variant::UT, world, cfg, rng);
  train::TrainResult nr = train::train(Variant::NR, world, cfg, rng);
  auto acc_ut = metrics::clean_accuracy(ut.classifier, world.test_set);
  auto acc_nr = metrics::clean_accuracy(nr.classifier, world.test_set);
  CHECK(acc_ut.value <= acc_nr.value + 1e-12);
}

TEST_CASE("training runs are deterministic under a fixed seed") {
  WorldConfig wcfg = small_world_config();
  train::World world = train::make_world(wcfg, 13);
  TrainConfig cfg = quick_train_config();
  Rng rng(14);
  train::TrainResult a = train::train(Variant::R, world, cfg, rng);
  train::TrainResult b = train::train(Variant::R, world, cfg, rng);
  CHECK(same_weights(a.classifier, b.classifier));
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t e = 0; e < a.log.size(); ++e) {
    CHECK(a.log[e].train_loss == b.log[e].train_loss);
    CHECK(a.log[e].val_accuracy == b.log[e].val_accuracy);
  }
}

TEST_CASE("lineage variants differ from their parents") {
  WorldConfig wcfg = small_world_config();
  train::World world = train::make_world(wcfg, 15);
  TrainConfig cfg = quick_train_config();
  Rng rng(16);
  train::TrainResult nr = train::train(Variant::NR, world, cfg, rng);
  train::TrainResult r = train::train(Variant::R, world, cfg, rng);
  train::TrainResult ca = train::train(Variant::CA, world, cfg, rng);
  train::TrainResult b = train::train(Variant::B, world, cfg, rng);
  CHECK_FALSE(same_weights(nr.classifier, r.classifier));
  CHECK_FALSE(same_weights(ca.classifier, b.classifier));
  CHECK_FALSE(same_weights(nr.classifier, ca.classifier));
}

TEST_CASE("training loss is non-increasing across most epochs") {
  WorldConfig wcfg = small_world_config();
  train::World world = train::make_world(wcfg, 17);
  TrainConfig cfg;
  cfg.samples_per_epoch = 4000;
  cfg.hidden_width = 16;
  cfg.early_stop = false;  // watch the full schedule
  Rng rng(18);
  train::TrainResult nr = train::train(Variant::NR, world, cfg, rng);
  REQUIRE(nr.log.size() == 8);
  int non_increasing = 0;
  for (std::size_t e = 1; e < nr.log.size(); ++e)
    if (nr.log[e].train_loss <= nr.log[e - 1].train_loss + 1e-12)
      ++non_increasing;
  CHECK(non_increasing >= static_cast<int>(0.9 * (nr.log.size() - 1)));
}

TEST_CASE("early stop fires on a plateau world") {
  WorldConfig wcfg = small_world_config();
  wcfg.separation = 0.0;
  wcfg.decoder_seeds = {44, 44};  // unlearnable: validation stays at chance
  train::World world = train::make_world(wcfg, 19);
  TrainConfig cfg = quick_train_config();
  cfg.max_epochs = 8;
  Rng rng(20);
  train::TrainResult nr = train::train(Variant::NR, world, cfg, rng);
  CHECK(nr.log.size() < 8);
}

TEST_CASE("conventional augmentation identity and masking edge cases") {
  Rng rng(21);
  Vector x = 0.8 * rng.normal_vector(10).cwiseMax(-1.0).cwiseMin(1.0);
  train::AugmentParams ident{0.0, 0.0, 0.0};
  CHECK(train::augment_conventional(x, ident, rng) == x);

  train::AugmentParams full_mask{0.0, 0.0, 1.0};
  CHECK(train::augment_conventional(x, full_mask, rng).isZero(0.0));

  train::AugmentParams usual{0.1, 0.05, 0.1};
  for (int rep = 0; rep < 10000; ++rep) {
    Vector y = train::augment_conventional(x, usual, rng);
    CHECK(y.maxCoeff() <= 1.0);
    CHECK(y.minCoeff() >= -1.0);
  }
}

TEST_CASE("noise augmentation has the right first two moments") {
  Rng rng(22);
  Vector x = rng.normal_vector(6);
  CHECK(train::augment_noise(x, 0.0, rng) == x);

  const double sigma = 0.8;
  const int draws = 100000;
  Vector sum = Vector::Zero(6), sumsq = Vector::Zero(6);
  for (int i = 0; i < draws; ++i) {
    Vector d = train::augment_noise(x, sigma, rng) - x;
    sum += d;
    sumsq += d.cwiseProduct(d);
  }
  for (int j = 0; j < 6; ++j) {
    double mean = sum[j] / draws;
    double var = sumsq[j] / draws - mean * mean;
    CHECK(std::fabs(mean) < 0.02);
    CHECK(std::fabs(var - sigma * sigma) < 0.02 * sigma * sigma);
  }
}

TEST_CASE("divergence raises a numeric error naming the epoch") {
  WorldConfig wcfg = small_world_config();
  train::World world = train::make_world(wcfg, 23);
  TrainConfig cfg = quick_train_config();
  cfg.learning_rate = 1e155;  // one update overflows the next forward pass
  Rng rng(24);
  CHECK_THROWS_AS(train::train(Variant::NR, world, cfg, rng), NumericError);
}

TEST_CASE("config validation rejects out-of-range settings") {
  TrainConfig cfg;
  cfg.max_epochs = 9;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.lr_decay = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.augment.mask_fraction = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  WorldConfig w;
  w.latent_dim = w.input_dim;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w = WorldConfig{};
  w.separation = -1.0;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("variant names round-trip") {
  for (Variant v : {Variant::UT, Variant::NR, Variant::CA, Variant::R,
                    Variant::B})
    CHECK(train::variant_from_name(train::variant_name(v)) == v);
  CHECK_THROWS_AS(train::variant_from_name("XX"), InvalidArgument);
}
