// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "latmet/noise.hpp"
#include "latmet/stats.hpp"

#include <cmath>
#include <numbers>
#include <vector>

using namespace latmet;

namespace {

// Full multivariate normal log density via Cholesky; the independent check
// for the closed-form c1/c2 path.
double dense_gaussian_logpdf(const Vector& x, const Vector& mean,
                             const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  REQUIRE(llt.info() == Eigen::Success);
  Matrix l = llt.matrixL();
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) logdet += 2.0 * std::log(l(i, i));
  Vector centered = x - mean;
  double quad = centered.dot(llt.solve(centered));
  auto n = static_cast<double>(x.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + logdet + quad);
}

}  // namespace

TEST_CASE("decay factor hits the reported table values") {
  CHECK(noise::decay_factor(0.0) == 0.0);
  CHECK(std::fabs(noise::decay_factor(0.5) - 0.106) < 5e-4);
  CHECK(std::fabs(noise::decay_factor(1.0) - 0.293) < 5e-4);
  CHECK_THROWS_AS(noise::decay_factor(-0.1), InvalidArgument);
}

TEST_CASE("epsilon zero leaves the latent vector untouched") {
  Rng rng(3);
  Vector l = rng.normal_vector(6);
  Vector noisy = noise::sample_noisy(l, 0.0, rng);
  CHECK((noisy - l).isZero(0.0));
}

TEST_CASE("huge epsilon gives unit per-coordinate variance from l = 0") {
  const int n = 4, draws = 100000;
  Rng rng(17);
  Vector l = Vector::Zero(n);
  Vector sum = Vector::Zero(n), sumsq = Vector::Zero(n);
  for (int i = 0; i < draws; ++i) {
    Vector v = noise::sample_noisy(l, 1e6, rng);
    sum += v;
    sumsq += v.cwiseProduct(v);
  }
  for (int j = 0; j < n; ++j) {
    double var = sumsq[j] / draws - std::pow(sum[j] / draws, 2);
    CHECK(var > 0.97);
    CHECK(var < 1.03);
  }
}

TEST_CASE("outer-sampled marginal stays standard normal") {
  const int n = 4, draws = 100000;
  Rng rng(23);
  Vector sum = Vector::Zero(n), sumsq = Vector::Zero(n);
  for (int i = 0; i < draws; ++i) {
    Vector l = rng.normal_vector(n);
    Vector v = noise::sample_noisy(l, 0.5, rng);
    sum += v;
    sumsq += v.cwiseProduct(v);
  }
  for (int j = 0; j < n; ++j) {
    double mean = sum[j] / draws;
    double var = sumsq[j] / draws - mean * mean;
    CHECK(std::fabs(mean) < 0.02);
    CHECK(var > 0.97);
    CHECK(var < 1.03);
  }
}

TEST_CASE("distribution preservation passes per-coordinate KS tests") {
  const int n = 4, draws = 100000;
  for (double eps : {0.25, 0.5, 1.0, 4.0}) {
    Rng rng(1000 + static_cast<std::uint64_t>(eps * 16));
    std::vector<std::vector<double>> coords(n);
    for (auto& c : coords) c.reserve(draws);
    for (int i = 0; i < draws; ++i) {
      Vector l = rng.normal_vector(n);
      Vector v = noise::sample_noisy(l, eps, rng);
      for (int j = 0; j < n; ++j) coords[j].push_back(v[j]);
    }
    for (int j = 0; j < n; ++j) {
      auto ks = stats::ks_test_standard_normal(coords[j]);
      CHECK(ks.p_value > 0.01);
    }
  }
}

TEST_CASE("small epsilon adds negligible noise") {
  const int n = 8, draws = 20000;
  Rng rng(5);
  double eps = 1e-3;
  double msd = 0.0;
  Vector l = rng.normal_vector(n);
  for (int i = 0; i < draws; ++i) {
    Vector v = noise::sample_noisy(l, eps, rng);
    msd += (v - l).squaredNorm();
  }
  msd /= draws;
  CHECK(msd < 1e-5 * n);
}

TEST_CASE("large epsilon decorrelates the draw from the input") {
  const int draws = 20000;
  Rng rng(29);
  std::vector<double> in, out;
  for (int i = 0; i < draws; ++i) {
    Vector l = rng.normal_vector(1);
    Vector v = noise::sample_noisy(l, 1e3, rng);
    in.push_back(l[0]);
    out.push_back(v[0]);
  }
  auto corr = stats::correlations(in, out);
  CHECK(std::fabs(corr.pearson) < 0.02);
}

TEST_CASE("reparameterized form matches the explicit mean") {
  const int n = 4, draws = 100000;
  Rng rng(31);
  double eps = 0.75;
  Vector l = rng.normal_vector(n);
  Vector sum = Vector::Zero(n);
  for (int i = 0; i < draws; ++i) sum += noise::sample_noisy(l, eps, rng);
  Vector mean = sum / draws;
  Vector expected = l / std::sqrt(1.0 + eps * eps);
  double sd = eps / std::sqrt(1.0 + eps * eps) / std::sqrt(double(draws));
  for (int j = 0; j < n; ++j)
    CHECK(std::fabs(mean[j] - expected[j]) < 5.0 * sd);
}

TEST_CASE("log likelihood of the zero perturbation, n=2, eps=1") {
  // N(0, I/2) density at 0 equals 1/pi; frozen as -log(pi).
  Vector zero = Vector::Zero(2);
  CHECK(noise::log_likelihood(zero, 1.0) ==
        doctest::Approx(-1.1447298858494002).epsilon(1e-14));
}

TEST_CASE("equal-norm perturbations share their likelihood") {
  Rng rng(37);
  Vector d = rng.normal_vector(5);
  Vector permuted(5);
  permuted << -d[4], d[2], -d[0], d[1], d[3];
  CHECK(std::fabs(noise::log_likelihood(d, 0.7) -
                  noise::log_likelihood(permuted, 0.7)) < 1e-12);
}

TEST_CASE("log likelihood matches the dense Gaussian oracle") {
  Rng rng(41);
  for (int rep = 0; rep < 50; ++rep) {
    int n = 2 + static_cast<int>(rng.uniform_int(14));
    double eps = rng.uniform(0.1, 4.0);
    Vector d = rng.normal_vector(n);
    double sigma2 = eps * eps / (1.0 + eps * eps);
    double oracle = dense_gaussian_logpdf(d, Vector::Zero(n),
                                          sigma2 * Matrix::Identity(n, n));
    CHECK(std::fabs(noise::log_likelihood(d, eps) - oracle) < 1e-10);
  }
}

TEST_CASE("likelihood requires positive epsilon") {
  Vector d = Vector::Zero(3);
  CHECK_THROWS_AS(noise::log_likelihood(d, 0.0), InvalidArgument);
  CHECK_THROWS_AS(noise::g_transform(0.5, 0.0, 3), InvalidArgument);
}

TEST_CASE("g transform maps the peak density to radius zero") {
  auto k = noise::likelihood_constants(0.5, 6);
  CHECK(noise::g_transform(std::exp(k.c1), 0.5, 6) ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(noise::g_transform(std::exp(k.c1) * 1.5, 0.5, 6),
                  InvalidArgument);
}

TEST_CASE("g transform round-trips the scaled norm") {
  Rng rng(43);
  for (int rep = 0; rep < 50; ++rep) {
    int n = 2 + static_cast<int>(rng.uniform_int(10));
    double eps = rng.uniform(0.2, 3.0);
    Vector d = rng.normal_vector(n);
    double tau = std::exp(noise::log_likelihood(d, eps));
    CHECK(std::fabs(noise::g_transform(tau, eps, n) - noise::scaled_norm(d)) <
          1e-10);
  }
}

TEST_CASE("g transform decreases in tau") {
  Rng rng(47);
  auto k = noise::likelihood_constants(1.0, 8);
  double cap = std::exp(k.c1);
  for (int rep = 0; rep < 100; ++rep) {
    double t1 = rng.uniform(1e-12, cap);
    double t2 = rng.uniform(1e-12, cap);
    if (t1 == t2) continue;
    if (t1 > t2) std::swap(t1, t2);
    CHECK(noise::g_transform(t1, 1.0, 8) > noise::g_transform(t2, 1.0, 8));
  }
}

TEST_CASE("log likelihood strictly decreases with the perturbation norm") {
  Rng rng(53);
  Vector dir = rng.normal_vector(6).normalized();
  double prev = noise::log_likelihood(Vector(0.0 * dir), 0.8);
  for (double r = 0.25; r < 4.0; r += 0.25) {
    double cur = noise::log_likelihood(Vector(r * dir), 0.8);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("scaled norm basics") {
  CHECK(noise::scaled_norm(Vector::Ones(4)) == doctest::Approx(1.0));
  CHECK(noise::scaled_norm(Vector::Zero(5)) == 0.0);

  Rng rng(59);
  const int n = 8, draws = 100000;
  double acc = 0.0;
  for (int i = 0; i < draws; ++i) {
    double s = noise::scaled_norm(rng.normal_vector(n));
    acc += s * s;
  }
  CHECK(std::fabs(acc / draws - 1.0) < 0.02);
}
