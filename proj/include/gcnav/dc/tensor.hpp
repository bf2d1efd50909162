#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gcnav::dc {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// A value in the recorded computation graph. Leaves with requires_grad are
/// parameters; interior nodes carry a backward closure over their parents.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

/// Shared handle to a graph node. Copies alias the same node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  /// Leaf that accumulates gradients.
  static Tensor leaf(Shape shape, std::vector<double> values);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  /// Size of dimension `axis`; negative axes count from the end.
  std::size_t dim(int axis) const;
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  /// Empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return node_->grad; }
  double item() const;
  bool requires_grad() const { return node_->requires_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Reverse-mode sweep from a scalar loss; accumulates into every reachable
/// leaf. Throws GraphError when the loss is not scalar or carries no graph.
void backward(const Tensor& loss);

/// Keeps freed tensor buffers in the heap instead of returning them to the OS.
/// Graph buffers are allocated and released every step, and page faults on
/// fresh mappings otherwise cost about a fifth of training time.
void retain_freed_buffers();

}  // namespace gcnav::dc
