#ifndef RNNHA_AUTODIFF_HPP_
#define RNNHA_AUTODIFF_HPP_

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "rnnha/tensor.hpp"

namespace rnnha::ad {

enum class Op {
  constant,
  parameter,
  matmul,
  sigmoid,
  tanh,
  softplus,
  relu,
  add,
  sub,
  mul,
  div,
  global_average_pool,
  cross_entropy,
  sum,
  reshape,
  scale_locations,
  conv2d,
  max_pool,
};

const char* op_name(Op op);

enum class UnaryKind { sigmoid, tanh, softplus, relu };
enum class BinaryKind { add, sub, mul, div };

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  /// Value of a single-element node.
  double item() const;
  /// Gradient of the last backward() root w.r.t. this node.
  std::span<const double> grad() const;

  std::size_t id() const { return id_; }
  Graph* graph() const { return graph_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/**
 * @brief Reverse-mode tape.
 *
 * Nodes are appended in evaluation order, so the tape is topologically
 * sorted by construction. Parameter leaves refer to tensors owned by the
 * caller; backward() adds into their grad buffers, which gives the +=
 * semantics needed when a weight is used at several time steps or across
 * the samples of a batch. The referenced tensors must outlive the graph.
 */
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor& param);

  /// Propagates d(root)/d(node) through the tape, scaled by `seed`.
  void backward(Var root, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }
  Op op(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  std::span<const double> grad(std::size_t id) const { return nodes_.at(id).grad; }

  // Used by op implementations.
  Var record(Op op, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward);
  std::span<double> grad_buffer(std::size_t id);
  Var var(std::size_t id) { return Var(this, id); }

 private:
  struct Node {
    Op op;
    std::vector<std::size_t> inputs;
    Tensor value;
    std::vector<double> grad;
    BackwardFn backward;
    Tensor* param = nullptr;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> param_nodes_;
};

// Primitives. Every operand must belong to the same graph.

/// [m x k]·[k x n] -> [m x n]; a rank-1 right operand gives [m].
Var matmul(Var a, Var b);
Var unary(UnaryKind kind, Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var softplus(Var x);
Var relu(Var x);
/// Elementwise; either operand may be a single-element tensor (broadcast).
Var binary(BinaryKind kind, Var x, Var y);
Var operator+(Var x, Var y);
Var operator-(Var x, Var y);
Var operator*(Var x, Var y);
Var operator/(Var x, Var y);
/// Multiplies by a constant scalar.
Var scale(Var x, double factor);
/// Adds a constant scalar.
Var shift(Var x, double offset);
/// [h x w x d] -> [d], spatial mean.
Var global_average_pool(Var x);
/// Max-shifted log-sum-exp cross entropy of rank-1 logits; returns a scalar.
Var softmax_cross_entropy(Var logits, std::size_t label);
Var sum(Var x);
Var reshape(Var x, Shape shape);
/// out[i,j,:] = weights[i,j] * x[i,j,:] for weights [h x w], x [h x w x d].
Var scale_locations(Var weights, Var x);
/// Valid 2-D convolution of x [H x W x Cin] with kernel [k x k x Cin x Cout].
Var conv2d(Var x, Var kernel, Var bias, std::size_t stride, std::size_t padding = 0);
/// 2x2 max pooling with stride 2 (floor on odd sizes).
Var max_pool2(Var x);

double sigmoid_value(double x);
/// max(x,0) + log1p(exp(-|x|)); never overflows.
double softplus_value(double x);

namespace testing {
/// Scales the upstream gradient of every node of kind `op` during backward.
/// Only meant for negative-control tests of the gradient checker.
void inject_backward_fault(std::optional<Op> op, double factor = 1.5);
}  // namespace testing

}  // namespace rnnha::ad

#endif  // RNNHA_AUTODIFF_HPP_
