// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "latmet/autodiff.hpp"

#include <cmath>
#include <limits>
#include <vector>

using namespace latmet;
using ad::Graph;
using ad::NodeId;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Random tanh MLP as a graph plus an independent plain re-evaluation.
struct RandomNet {
  std::vector<Matrix> w;
  std::vector<Vector> b;

  static RandomNet make(const std::vector<int>& dims, Rng& rng) {
    RandomNet net;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      Matrix wi(dims[i + 1], dims[i]);
      for (Eigen::Index r = 0; r < wi.rows(); ++r)
        for (Eigen::Index c = 0; c < wi.cols(); ++c) wi(r, c) = rng.normal();
      net.w.push_back(wi);
      net.b.push_back(rng.normal_vector(dims[i + 1]));
    }
    return net;
  }

  // graph: sum(tanh(W_k ... tanh(W_1 x + b_1) ... + b_k))
  NodeId build(Graph& g, NodeId x) const {
    NodeId node = x;
    for (std::size_t i = 0; i < w.size(); ++i)
      node = g.tanh(g.affine(w[i], b[i], node));
    return g.sum(node);
  }

  double reference(const Vector& x) const {
    Vector v = x;
    for (std::size_t i = 0; i < w.size(); ++i) {
      v = w[i] * v + b[i];
      for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = std::tanh(v[j]);
    }
    return v.sum();
  }
};

}  // namespace

TEST_CASE("sum of squares of (3,4) is 25") {
  Graph g;
  NodeId x = g.input(2);
  NodeId out = g.sum_squares(x);
  std::vector<Vector> in{vec({3.0, 4.0})};
  CHECK(ad::evaluate(g, out, in) == doctest::Approx(25.0).epsilon(1e-15));
}

TEST_CASE("identity affine followed by sum adds the components") {
  Graph g;
  NodeId x = g.input(3);
  NodeId out = g.sum(g.affine(Matrix::Identity(3, 3), Vector::Zero(3), x));
  std::vector<Vector> in{vec({1.5, -2.0, 4.25})};
  CHECK(ad::evaluate(g, out, in) == doctest::Approx(3.75).epsilon(1e-15));
}

TEST_CASE("tanh network value matches a plain re-evaluation") {
  Rng rng(42);
  for (int rep = 0; rep < 10; ++rep) {
    RandomNet net = RandomNet::make({4, 6, 3}, rng);
    Graph g;
    NodeId x = g.input(4);
    NodeId out = net.build(g, x);
    Vector point = rng.normal_vector(4);
    std::vector<Vector> in{point};
    CHECK(ad::evaluate(g, out, in) ==
          doctest::Approx(net.reference(point)).epsilon(1e-12));
  }
}

TEST_CASE("d/dx of x^2 at 3 is 6") {
  Graph g;
  NodeId x = g.input(1);
  NodeId out = g.sum_squares(x);
  std::vector<Vector> in{vec({3.0})};
  Vector grad = ad::gradient(g, out, in);
  CHECK(grad.size() == 1);
  CHECK(grad[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("gradient of an expression that ignores the input is zero") {
  Graph g;
  NodeId x = g.input(3);
  NodeId out = g.sum(g.constant(vec({1.0, 2.0})));
  std::vector<Vector> in{vec({0.5, 0.5, 0.5})};
  Vector grad = ad::gradient(g, out, in);
  CHECK(grad.isZero(0.0));
  CHECK(grad.size() == 3);
  (void)x;
}

TEST_CASE("3-layer tanh network gradient matches central differences") {
  Rng rng(7);
  RandomNet net = RandomNet::make({5, 8, 8, 2}, rng);
  Graph g;
  NodeId x = g.input(5);
  NodeId out = net.build(g, x);
  Vector point = rng.normal_vector(5);
  std::vector<Vector> in{point};
  Vector analytic = ad::gradient(g, out, in);
  Vector fd = ad::finite_difference_gradient(g, out, in, 0, 1e-5);
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    double err = std::fabs(analytic[i] - fd[i]) /
                 std::max(1.0, std::fabs(analytic[i]));
    CHECK(err < 1e-4);
  }
}

TEST_CASE("finite differences recover a linear map exactly") {
  Graph g;
  NodeId x = g.input(4);
  Matrix w(1, 4);
  w << 2.0, -1.0, 0.5, 3.0;
  NodeId out = g.sum(g.affine(w, Vector::Zero(1), x));
  std::vector<Vector> in{vec({0.1, 0.2, 0.3, 0.4})};
  Vector fd = ad::finite_difference_gradient(g, out, in, 0, 1e-5);
  for (Eigen::Index i = 0; i < 4; ++i)
    CHECK(fd[i] == doctest::Approx(w(0, i)).epsilon(1e-9));
}

TEST_CASE("x^2 at 3 by finite differences") {
  Graph g;
  NodeId out = g.sum_squares(g.input(1));
  std::vector<Vector> in{vec({3.0})};
  Vector fd = ad::finite_difference_gradient(g, out, in, 0, 1e-5);
  CHECK(std::fabs(fd[0] - 6.0) < 1e-6);
}

TEST_CASE("analytic and finite-difference gradients agree on random nets") {
  Rng rng(2024);
  for (int rep = 0; rep < 20; ++rep) {
    RandomNet net = RandomNet::make({3, 5, 4}, rng);
    Graph g;
    NodeId x = g.input(3);
    NodeId out = net.build(g, x);
    std::vector<Vector> in{rng.normal_vector(3)};
    Vector analytic = ad::gradient(g, out, in);
    Vector fd = ad::finite_difference_gradient(g, out, in, 0, 1e-5);
    for (Eigen::Index i = 0; i < analytic.size(); ++i)
      CHECK(std::fabs(analytic[i] - fd[i]) /
                std::max(1.0, std::fabs(analytic[i])) <
            1e-4);
  }
}

TEST_CASE("every primitive op passes the finite-difference check") {
  // One composite graph touching affine, tanh, relu, add, sub, scale, sum,
  // sum_squares, max_component and component, probed at random points that
  // keep a safe margin from the relu and max kinks.
  Rng rng(11);
  Matrix w(4, 4);
  for (Eigen::Index r = 0; r < 4; ++r)
    for (Eigen::Index c = 0; c < 4; ++c) w(r, c) = rng.normal();
  Vector b = rng.normal_vector(4);

  Graph g;
  NodeId x = g.input(4);
  NodeId aff = g.affine(w, b, x);
  NodeId mix = g.add(g.relu(aff), g.scale(0.5, g.tanh(x)));
  NodeId diff = g.sub(mix, g.constant(vec({0.1, 0.2, 0.3, 0.4})));
  NodeId out = g.sum(g.add(g.add(g.sum_squares(diff), g.max_component(mix)),
                           g.component(diff, 2)));

  int checked = 0;
  for (int rep = 0; rep < 100 && checked < 100; ++rep) {
    Vector point = rng.normal_vector(4);
    // Reject points too close to a relu kink or a max tie for the
    // finite-difference window.
    Vector pre = w * point + b;
    bool safe = pre.cwiseAbs().minCoeff() > 1e-3;
    if (!safe) continue;
    ++checked;
    std::vector<Vector> in{point};
    Vector analytic = ad::gradient(g, out, in);
    Vector fd = ad::finite_difference_gradient(g, out, in, 0, 1e-6);
    for (Eigen::Index i = 0; i < analytic.size(); ++i)
      CHECK(std::fabs(analytic[i] - fd[i]) /
                std::max(1.0, std::fabs(analytic[i])) <
            1e-4);
  }
  CHECK(checked > 50);
}

TEST_CASE("gradient is linear in the expression") {
  Rng rng(99);
  RandomNet f = RandomNet::make({4, 5, 3}, rng);
  RandomNet h = RandomNet::make({4, 6, 2}, rng);
  const double a = 1.7, c = -0.4;

  Graph g;
  NodeId x = g.input(4);
  NodeId fx = f.build(g, x);
  NodeId hx = h.build(g, x);
  NodeId combined = g.add(g.scale(a, fx), g.scale(c, hx));

  std::vector<Vector> in{rng.normal_vector(4)};
  Vector grad_f = ad::gradient(g, fx, in);
  Vector grad_h = ad::gradient(g, hx, in);
  Vector grad_combined = ad::gradient(g, combined, in);
  Vector expected = a * grad_f + c * grad_h;
  for (Eigen::Index i = 0; i < 4; ++i)
    CHECK(std::fabs(grad_combined[i] - expected[i]) < 1e-10);
}

TEST_CASE("evaluation is deterministic bit for bit") {
  Rng rng(5);
  RandomNet net = RandomNet::make({6, 7, 3}, rng);
  Graph g;
  NodeId x = g.input(6);
  NodeId out = net.build(g, x);
  std::vector<Vector> in{rng.normal_vector(6)};
  double v1 = ad::evaluate(g, out, in);
  double v2 = ad::evaluate(g, out, in);
  CHECK(v1 == v2);
  Vector g1 = ad::gradient(g, out, in);
  Vector g2 = ad::gradient(g, out, in);
  CHECK((g1 - g2).isZero(0.0));
}

TEST_CASE("relu subgradient at the kink takes the zero branch") {
  Graph g;
  NodeId x = g.input(2);
  NodeId out = g.sum(g.relu(x));
  std::vector<Vector> in{vec({0.0, 2.0})};
  Vector grad = ad::gradient(g, out, in);
  CHECK(grad[0] == 0.0);
  CHECK(grad[1] == 1.0);
}

TEST_CASE("max_component ties pick the first attaining index") {
  Graph g;
  NodeId x = g.input(3);
  NodeId out = g.max_component(x);
  std::vector<Vector> in{vec({1.0, 1.0, 0.5})};
  Vector grad = ad::gradient(g, out, in);
  CHECK(grad[0] == 1.0);
  CHECK(grad[1] == 0.0);
  CHECK(grad[2] == 0.0);
}

TEST_CASE("dimension mismatches are rejected") {
  Graph g;
  NodeId x = g.input(3);
  CHECK_THROWS_AS(g.affine(Matrix::Identity(2, 2), Vector::Zero(2), x),
                  DimensionError);
  CHECK_THROWS_AS(g.add(x, g.constant(vec({1.0}))), DimensionError);
  CHECK_THROWS_AS(g.component(x, 3), DimensionError);

  NodeId out = g.sum(x);
  std::vector<Vector> wrong{vec({1.0, 2.0})};
  CHECK_THROWS_AS(ad::evaluate(g, out, wrong), DimensionError);
}

TEST_CASE("non-finite intermediates raise a numeric error") {
  Graph g;
  NodeId x = g.input(1);
  NodeId out = g.sum_squares(g.affine(Matrix::Constant(1, 1, 1e308),
                                      Vector::Zero(1), x));
  std::vector<Vector> in{vec({1e308})};
  CHECK_THROWS_AS(ad::evaluate(g, out, in), NumericError);

  std::vector<Vector> bad{vec({std::numeric_limits<double>::quiet_NaN()})};
  CHECK_THROWS_AS(ad::evaluate(g, g.sum(x), bad), NumericError);
}
