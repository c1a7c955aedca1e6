#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rafa {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tensor;

namespace detail {

struct Node;

// Receives the producing node once its output gradient is complete and
// accumulates into the gradients of node.inputs.
using BackwardFn = std::function<void(Node& node)>;

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
};

/// Gradient buffer of an input node, allocated (zero) on first use.
/// Returns an empty span when the input does not track gradients.
std::span<double> grad_of(Node& node);

/// Builds the output of a differentiable op. The backward function and the
/// input edges are only kept when some input requires a gradient and
/// recording is enabled.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   BackwardFn backward);

}  // namespace detail

/// Dense row-major tensor of doubles; a cheap handle onto a node of the
/// define-by-run differentiation graph. Copies share the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  std::string shape_str() const { return shape_to_string(shape()); }

  std::span<const double> data() const;
  /// Writable view for leaf tensors (parameters). Mutating a tensor that
  /// already feeds a recorded graph invalidates that graph.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Copy of the values with no graph history.
  Tensor detach() const;

  /// Reverse-mode sweep from this scalar: populates grad on every reachable
  /// tensor that requires it. Gradients accumulate across calls.
  void backward() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor detail::make_result(Shape, std::vector<double>, std::vector<Tensor>,
                                    detail::BackwardFn);

  std::shared_ptr<detail::Node> node_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

}  // namespace rafa
