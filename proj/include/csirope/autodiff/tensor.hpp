#pragma once

// Dense row-major float64 tensors with a reverse-mode tape.
//
// Every op returns a new node holding its value and, when any input requires
// a gradient, the closure that pushes the node's adjoint back to its inputs.
// Nodes are immutable after creation except for their gradient accumulators.
// A graph must only be touched by one thread at a time.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csirope::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Shape shape;
  std::vector<double> value;
  // Empty until the first adjoint contribution arrives.
  std::vector<double> grad;
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<NodePtr> inputs;
  // Reads this->grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward;

  // Allocates a zeroed accumulator on first use.
  std::vector<double>& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const;
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  bool has_grad() const;
  // Gradient view; empty span when no contribution was recorded.
  std::span<const double> grad() const;
  void zero_grad() const;

  // Populates gradients of every requires_grad node reachable from this
  // scalar. Contributions accumulate; call zero_grad on leaves between runs.
  void backward() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Creates an op result. When no input requires a gradient the closure is
/// dropped and the node carries no graph edges.
Tensor make_result(std::string_view op, Shape shape, std::vector<double> value,
                   std::vector<Tensor> inputs, std::function<void(Node&)> backward);

/// Text listing of the graph below `root`, one node per line in topological
/// order.
std::string dump_graph(const Tensor& root);

/// Nodes reachable from root, inputs before consumers.
std::vector<Node*> topological_order(const Tensor& root);

}  // namespace csirope::ad
