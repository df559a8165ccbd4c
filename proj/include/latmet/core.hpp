// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace latmet {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value produced or supplied where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; carries the byte offset where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t byte_offset)
      : Error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

inline void check_dim(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

template <typename Derived>
void check_finite(const Eigen::MatrixBase<Derived>& v, const std::string& what) {
  if (!v.allFinite()) throw NumericError(what + ": non-finite entries");
}

// ---------------------------------------------------------------------------
// Deterministic random number generation
// ---------------------------------------------------------------------------

/// Seedable generator producing a platform-independent stream: mt19937_64
/// for bits, Box-Muller for normals. Independent substreams are derived from
/// the construction seed (not the consumed state), so `derive(j)` yields the
/// same stream no matter how many draws the parent has made.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform double in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, hi] inclusive.
  std::uint64_t uniform_int(std::uint64_t hi);
  /// Standard normal draw (Box-Muller; pairs are cached).
  double normal();
  Vector normal_vector(Eigen::Index n);

  /// Independent substream keyed by `stream`; keyed off the original seed.
  Rng derive(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// splitmix64 finalizer; used for seed mixing.
std::uint64_t mix_seed(std::uint64_t x);

// ---------------------------------------------------------------------------
// Deterministic parallel execution
// ---------------------------------------------------------------------------

/// Runs body(i) for i in [0, n). With jobs > 1 the index range is split into
/// contiguous blocks over std::thread workers; callers keep determinism by
/// writing results into per-index slots and aggregating afterwards in index
/// order. Exceptions from workers are rethrown on the calling thread.
void parallel_for(int n, int jobs, const std::function<void(int)>& body);

// ---------------------------------------------------------------------------
// Logging (level from LATMET_LOG: error|warn|info|debug)
// ---------------------------------------------------------------------------

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

LogLevel log_level();
void log_message(LogLevel level, const std::string& msg);

}  // namespace latmet
