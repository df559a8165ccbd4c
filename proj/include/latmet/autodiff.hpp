// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode differentiation over dense vectors. A Graph is an
// immutable DAG of primitive ops built bottom-up; a Tape holds the forward
// values of one evaluation and runs the backward pass. Enough machinery to
// differentiate scalar objectives through classifier-after-decoder
// compositions; nothing more.

#pragma once

#include "latmet/core.hpp"

#include <span>
#include <vector>

namespace latmet::ad {

using NodeId = int;

enum class Op {
  Input,
  Constant,
  Affine,        // W * x + b
  Tanh,          // elementwise
  Relu,          // elementwise max(0, x); slope 0 at the kink
  Add,           // x + y
  Sub,           // x - y
  Scale,         // c * x
  Sum,           // sum of components -> 1-dim
  SumSquares,    // sum of squared components -> 1-dim
  MaxComponent,  // max over components -> 1-dim; ties take the first index
  Component,     // x[i] -> 1-dim
};

struct Node {
  Op op;
  int dim = 0;  // output dimension
  NodeId a = -1;
  NodeId b = -1;
  Matrix w;       // Affine
  Vector v;       // Affine bias / Constant value
  double c = 0.0;  // Scale
  int index = 0;   // Component index / Input slot
};

/// Computation graph. Children must exist before parents, so construction
/// order is topological and the structure is acyclic. Immutable once built;
/// safe to share read-only across threads. Evaluation state lives in Tape,
/// one per thread.
class Graph {
 public:
  NodeId input(int dim);
  NodeId constant(Vector value);
  NodeId affine(Matrix w, Vector b, NodeId x);
  NodeId tanh(NodeId x);
  NodeId relu(NodeId x);
  NodeId add(NodeId x, NodeId y);
  NodeId sub(NodeId x, NodeId y);
  NodeId scale(double c, NodeId x);
  NodeId sum(NodeId x);
  NodeId sum_squares(NodeId x);
  NodeId max_component(NodeId x);
  NodeId component(NodeId x, int index);

  int dim(NodeId id) const { return nodes_[check_id(id)].dim; }
  int num_inputs() const { return static_cast<int>(inputs_.size()); }
  int input_dim(int slot) const;
  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_[check_id(id)]; }
  NodeId input_node(int slot) const;

 private:
  NodeId push(Node n);
  NodeId check_id(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<NodeId> inputs_;
};

/// Forward values of one evaluation of `graph` at the given input vectors.
/// Every node value is checked finite as it is produced; a non-finite
/// intermediate raises NumericError. Backward passes visit each node exactly
/// once, in reverse construction order.
class Tape {
 public:
  Tape(const Graph& graph, std::span<const Vector> inputs);

  /// Scalar value of a 1-dim node.
  double value(NodeId out) const;
  const Vector& value_vector(NodeId id) const;

  /// d value(out) / d input(slot). Zero vector if the input does not feed out.
  Vector gradient(NodeId out, int input_slot = 0) const;

 private:
  const Graph* graph_;
  std::vector<Vector> values_;
};

double evaluate(const Graph& graph, NodeId out, std::span<const Vector> inputs);
Vector gradient(const Graph& graph, NodeId out, std::span<const Vector> inputs,
                int input_slot = 0);

/// Central-difference estimate of gradient(); the independent check for the
/// analytic backward pass. step must be positive.
Vector finite_difference_gradient(const Graph& graph, NodeId out,
                                  std::span<const Vector> inputs,
                                  int input_slot, double step);

}  // namespace latmet::ad
