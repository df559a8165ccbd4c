// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner behind the CLI: JSON configuration, world/model/report
// files, and the world -> train -> eval -> report pipeline. Reports are
// byte-identical for a fixed master seed (timestamps go to a separate run
// log, never into report.json).

#pragma once

#include "latmet/attack.hpp"
#include "latmet/core.hpp"
#include "latmet/metrics.hpp"
#include "latmet/train.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace latmet::cli {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 success, 1 partial metric failure, 2 configuration error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitPartialFailure = 1;
inline constexpr int kExitConfigError = 2;

struct MetricPlan {
  std::vector<std::string> names{"clean",  "noise", "lga",  "lra",
                                 "llna",   "laga",  "lara", "lags",
                                 "lars",   "severity_l2", "severity_linf"};
  std::vector<double> epsilons{0.5, 1.0};
  std::vector<double> rhos{0.1};
  int lga_samples = 2000;
  int adv_samples = 50;   // generation-based attack metrics (laga/lags)
  int eval_points = 50;   // dataset prefix for reconstruction + severity
  int llna_samples = 200;
  int llna_points = 2;
  double noise_sigma = 0.8;
  attack::AttackConfig bounded = attack::AttackConfig::bounded_defaults();
  attack::AttackConfig min_norm = attack::AttackConfig::min_norm_defaults();
  attack::AttackConfig original = attack::AttackConfig::original_space_defaults();
};

struct ExperimentConfig {
  std::uint64_t seed = 20260809;
  train::WorldConfig world;
  train::TrainConfig training;
  std::vector<std::string> variants{"UT", "NR", "CA", "R", "B"};
  MetricPlan metrics;

  void validate() const;
};

/// Parses a config file; unknown keys are configuration errors.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& config);

/// FNV-1a hash of a canonical JSON dump, as fixed-width hex.
std::string config_hash(const ExperimentConfig& config);
std::string world_hash(const ExperimentConfig& config);
std::string models_hash(const ExperimentConfig& config);

// Dataset files (one per split).
void save_dataset(const metrics::Dataset& set,
                  const std::filesystem::path& path);
metrics::Dataset load_dataset(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Commands. Each returns a process exit code.
// ---------------------------------------------------------------------------

/// Writes decoders, datasets and world.json under <out>/world.
int cmd_world(const ExperimentConfig& config,
              const std::filesystem::path& out_dir);

/// Trains the configured variants in lineage order; writes model files and
/// per-variant training logs under <out>/models.
int cmd_train(const ExperimentConfig& config,
              const std::filesystem::path& out_dir);

/// Evaluates the metric plan for every trained variant; writes report.json
/// and severity record CSVs under <out>/report.
int cmd_eval(const ExperimentConfig& config,
             const std::filesystem::path& out_dir,
             const std::filesystem::path& models_dir, int jobs);

struct AttackQuery {
  std::string classifier;       // variant name
  int point = -1;               // test-set index; -1 means explicit latent
  int label = -1;               // required with `latent`
  std::vector<double> latent;   // explicit l0, skips encoding
  double epsilon = 0.5;
  double rho = -1.0;            // > 0 selects the threshold check
  bool has_seed = false;
  std::uint64_t seed = 0;       // falls back to the attack config seed
};

/// Single-point LLAR threshold check or minimum-norm query; prints JSON.
int cmd_attack(const ExperimentConfig& config,
               const std::filesystem::path& out_dir,
               const std::filesystem::path& models_dir,
               const AttackQuery& query);

/// Correlation tables (Pearson/Spearman across classifiers) and merged
/// severity plot data for one or more report bundles.
int cmd_report(const std::vector<std::filesystem::path>& bundles,
               const std::filesystem::path& out_dir);

/// Full argv entry point used by the binary.
int run_cli(int argc, char** argv);

}  // namespace latmet::cli
