// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0

#include "latmet/autodiff.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace latmet::ad {

namespace {

std::string op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Constant: return "constant";
    case Op::Affine: return "affine";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Scale: return "scale";
    case Op::Sum: return "sum";
    case Op::SumSquares: return "sum_squares";
    case Op::MaxComponent: return "max_component";
    case Op::Component: return "component";
  }
  return "?";
}

// First index attaining the maximum; the tie rule for the subgradient.
Eigen::Index first_argmax(const Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::check_id(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
    throw InvalidArgument("autodiff: node id out of range");
  return id;
}

NodeId Graph::input(int dim) {
  if (dim <= 0) throw DimensionError("autodiff: input dim must be positive");
  Node n;
  n.op = Op::Input;
  n.dim = dim;
  n.index = static_cast<int>(inputs_.size());
  NodeId id = push(std::move(n));
  inputs_.push_back(id);
  return id;
}

NodeId Graph::constant(Vector value) {
  if (value.size() == 0) throw DimensionError("autodiff: empty constant");
  check_finite(value, "autodiff constant");
  Node n;
  n.op = Op::Constant;
  n.dim = static_cast<int>(value.size());
  n.v = std::move(value);
  return push(std::move(n));
}

NodeId Graph::affine(Matrix w, Vector b, NodeId x) {
  check_id(x);
  check_dim(w.cols() == dim(x), "affine: W cols != input dim");
  check_dim(b.size() == w.rows(), "affine: bias size != W rows");
  check_finite(w, "affine weights");
  check_finite(b, "affine bias");
  Node n;
  n.op = Op::Affine;
  n.dim = static_cast<int>(w.rows());
  n.a = x;
  n.w = std::move(w);
  n.v = std::move(b);
  return push(std::move(n));
}

NodeId Graph::tanh(NodeId x) {
  Node n;
  n.op = Op::Tanh;
  n.dim = dim(check_id(x));
  n.a = x;
  return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
  Node n;
  n.op = Op::Relu;
  n.dim = dim(check_id(x));
  n.a = x;
  return push(std::move(n));
}

NodeId Graph::add(NodeId x, NodeId y) {
  check_dim(dim(check_id(x)) == dim(check_id(y)), "add: dim mismatch");
  Node n;
  n.op = Op::Add;
  n.dim = dim(x);
  n.a = x;
  n.b = y;
  return push(std::move(n));
}

NodeId Graph::sub(NodeId x, NodeId y) {
  check_dim(dim(check_id(x)) == dim(check_id(y)), "sub: dim mismatch");
  Node n;
  n.op = Op::Sub;
  n.dim = dim(x);
  n.a = x;
  n.b = y;
  return push(std::move(n));
}

NodeId Graph::scale(double c, NodeId x) {
  if (!std::isfinite(c)) throw NumericError("scale: non-finite factor");
  Node n;
  n.op = Op::Scale;
  n.dim = dim(check_id(x));
  n.a = x;
  n.c = c;
  return push(std::move(n));
}

NodeId Graph::sum(NodeId x) {
  Node n;
  n.op = Op::Sum;
  n.dim = 1;
  n.a = check_id(x);
  return push(std::move(n));
}

NodeId Graph::sum_squares(NodeId x) {
  Node n;
  n.op = Op::SumSquares;
  n.dim = 1;
  n.a = check_id(x);
  return push(std::move(n));
}

NodeId Graph::max_component(NodeId x) {
  Node n;
  n.op = Op::MaxComponent;
  n.dim = 1;
  n.a = check_id(x);
  return push(std::move(n));
}

NodeId Graph::component(NodeId x, int index) {
  check_id(x);
  check_dim(index >= 0 && index < dim(x), "component: index out of range");
  Node n;
  n.op = Op::Component;
  n.dim = 1;
  n.a = x;
  n.index = index;
  return push(std::move(n));
}

int Graph::input_dim(int slot) const {
  return nodes_[input_node(slot)].dim;
}

NodeId Graph::input_node(int slot) const {
  if (slot < 0 || slot >= static_cast<int>(inputs_.size()))
    throw InvalidArgument("autodiff: input slot out of range");
  return inputs_[slot];
}

Tape::Tape(const Graph& graph, std::span<const Vector> inputs)
    : graph_(&graph) {
  if (static_cast<int>(inputs.size()) != graph.num_inputs())
    throw DimensionError("evaluate: expected " +
                         std::to_string(graph.num_inputs()) + " inputs, got " +
                         std::to_string(inputs.size()));
  for (int s = 0; s < graph.num_inputs(); ++s) {
    check_dim(inputs[s].size() == graph.input_dim(s),
              "evaluate: input " + std::to_string(s) + " dim mismatch");
    check_finite(inputs[s], "evaluate input " + std::to_string(s));
  }

  values_.resize(graph.size());
  for (NodeId id = 0; id < static_cast<NodeId>(graph.size()); ++id) {
    const Node& n = graph.node(id);
    Vector& out = values_[id];
    switch (n.op) {
      case Op::Input:
        out = inputs[n.index];
        break;
      case Op::Constant:
        out = n.v;
        break;
      case Op::Affine:
        out = n.w * values_[n.a] + n.v;
        break;
      case Op::Tanh:
        out = values_[n.a].unaryExpr([](double t) { return std::tanh(t); });
        break;
      case Op::Relu:
        out = values_[n.a].cwiseMax(0.0);
        break;
      case Op::Add:
        out = values_[n.a] + values_[n.b];
        break;
      case Op::Sub:
        out = values_[n.a] - values_[n.b];
        break;
      case Op::Scale:
        out = n.c * values_[n.a];
        break;
      case Op::Sum:
        out = Vector::Constant(1, values_[n.a].sum());
        break;
      case Op::SumSquares:
        out = Vector::Constant(1, values_[n.a].squaredNorm());
        break;
      case Op::MaxComponent:
        out = Vector::Constant(1, values_[n.a].maxCoeff());
        break;
      case Op::Component:
        out = Vector::Constant(1, values_[n.a][n.index]);
        break;
    }
    if (!out.allFinite())
      throw NumericError("evaluate: non-finite value at node " +
                         std::to_string(id) + " (" + op_name(n.op) + ")");
  }
}

double Tape::value(NodeId out) const {
  const Vector& v = value_vector(out);
  check_dim(v.size() == 1, "value: node is not scalar");
  return v[0];
}

const Vector& Tape::value_vector(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(values_.size()))
    throw InvalidArgument("tape: node id out of range");
  return values_[id];
}

Vector Tape::gradient(NodeId out, int input_slot) const {
  const Graph& g = *graph_;
  check_dim(g.dim(out) == 1, "gradient: output must be scalar");
  NodeId target = g.input_node(input_slot);

  // Adjoints, allocated lazily; reverse construction order is a reverse
  // topological order, so each node is finished before it is visited.
  std::vector<Vector> adj(g.size());
  auto accumulate = [&](NodeId id, const Vector& contribution) {
    if (adj[id].size() == 0)
      adj[id] = contribution;
    else
      adj[id] += contribution;
  };
  adj[out] = Vector::Constant(1, 1.0);

  for (NodeId id = out; id >= 0; --id) {
    if (adj[id].size() == 0) continue;
    const Node& n = g.node(id);
    const Vector& a = adj[id];
    switch (n.op) {
      case Op::Input:
      case Op::Constant:
        break;
      case Op::Affine:
        accumulate(n.a, n.w.transpose() * a);
        break;
      case Op::Tanh: {
        const Vector& y = values_[id];
        accumulate(n.a, (a.array() * (1.0 - y.array().square())).matrix());
        break;
      }
      case Op::Relu: {
        const Vector& x = values_[n.a];
        accumulate(
            n.a, (a.array() * (x.array() > 0.0).cast<double>()).matrix());
        break;
      }
      case Op::Add:
        accumulate(n.a, a);
        accumulate(n.b, a);
        break;
      case Op::Sub:
        accumulate(n.a, a);
        accumulate(n.b, -a);
        break;
      case Op::Scale:
        accumulate(n.a, n.c * a);
        break;
      case Op::Sum:
        accumulate(n.a, Vector::Constant(values_[n.a].size(), a[0]));
        break;
      case Op::SumSquares:
        accumulate(n.a, 2.0 * a[0] * values_[n.a]);
        break;
      case Op::MaxComponent: {
        Vector d = Vector::Zero(values_[n.a].size());
        d[first_argmax(values_[n.a])] = a[0];
        accumulate(n.a, d);
        break;
      }
      case Op::Component: {
        Vector d = Vector::Zero(values_[n.a].size());
        d[n.index] = a[0];
        accumulate(n.a, d);
        break;
      }
    }
  }

  if (adj[target].size() == 0) return Vector::Zero(g.dim(target));
  check_finite(adj[target], "gradient");
  return adj[target];
}

double evaluate(const Graph& graph, NodeId out,
                std::span<const Vector> inputs) {
  return Tape(graph, inputs).value(out);
}

Vector gradient(const Graph& graph, NodeId out, std::span<const Vector> inputs,
                int input_slot) {
  return Tape(graph, inputs).gradient(out, input_slot);
}

Vector finite_difference_gradient(const Graph& graph, NodeId out,
                                  std::span<const Vector> inputs,
                                  int input_slot, double step) {
  if (!(step > 0.0)) throw InvalidArgument("finite differences: step <= 0");
  check_dim(graph.dim(out) == 1, "finite differences: output must be scalar");
  std::vector<Vector> work(inputs.begin(), inputs.end());
  Vector& x = work[input_slot];
  Vector grad(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double keep = x[i];
    x[i] = keep + step;
    double hi = evaluate(graph, out, work);
    x[i] = keep - step;
    double lo = evaluate(graph, out, work);
    x[i] = keep;
    grad[i] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

}  // namespace latmet::ad
