#pragma once

// Dense float32 tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared node. Nodes produced by ops are
// immutable; only leaf nodes (parameters) may have their values rewritten, and
// only gradient buffers accumulate. Each op records a closure that pushes the
// node's gradient into its parents; Tensor::backward() walks the graph once in
// reverse topological order and then releases it.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pidcount {

using Shape = std::vector<int>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until a gradient reaches the node
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
  }
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const;
  int dim(std::size_t axis) const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const float> data() const;
  /// Writable view of a leaf's values (used by optimizers and loaders).
  std::span<float> mutable_data();
  float item() const;

  bool requires_grad() const;
  /// Gradient buffer; zeros if nothing has been accumulated yet.
  std::span<const float> grad() const;
  std::span<float> mutable_grad();
  void zero_grad();

  /// Differentiates this scalar with respect to every reachable leaf that
  /// requires grad. The graph is released afterwards; a second call throws
  /// StateError.
  void backward();

  /// Same values, no history.
  Tensor detach() const;

  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

  // Op implementation surface.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Whether ops currently record history (thread-local).
bool grad_enabled() noexcept;

/// Disables graph recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- operations ----------------------------------------------------------

/// 2-D cross-correlation with zero padding. input [N,Cin,H,W], weight
/// [Cout,Cin,k,k] with k odd, bias [Cout] (may be undefined).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
              int padding = 0);

/// Transposed convolution with kernel 3, stride 2, padding 1 and output
/// padding 1: [N,Cin,H,W] -> [N,Cout,2H,2W]. weight is [Cin,Cout,3,3]; the op
/// is the adjoint of conv2d(stride 2, padding 1) under the same weight.
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// 2x2 max pooling with stride 2. The gradient goes to the first maximal
/// cell of each window in row-major order.
Tensor maxpool2d(const Tensor& input);

/// Pixel-interval down-sampling: [N,C,H,W] -> [N,4C,H/2,W/2] with
/// out[n, q*C + c, i, j] = in[n, c, 2i+dy, 2j+dx] and q = 2*dy + dx.
Tensor pid_downsample(const Tensor& input);

/// Exact inverse of pid_downsample: [N,4C,H,W] -> [N,C,2H,2W].
Tensor pid_reassemble(const Tensor& input);

Tensor relu(const Tensor& input);

/// Concatenates along the channel axis, in argument order.
Tensor concat_channels(std::span<const Tensor> inputs);

/// Softmax over the channel axis of [N,K,H,W], K >= 2.
Tensor softmax_channels(const Tensor& logits);

/// Foreground-probability clamp applied before the logarithm.
inline constexpr float kProbabilityEpsilon = 1e-7f;

/// Mean binary cross-entropy between channel 1 of probs [N,2,H,W] and a 0/1
/// target [N,H,W]. Returns a scalar tensor.
Tensor cross_entropy_loss(const Tensor& probs, const Tensor& target);

/// Sum of all elements, as a scalar tensor.
Tensor sum(const Tensor& input);

/// Sum of input * weights (weights carry no gradient). Handy as a probe loss.
Tensor weighted_sum(const Tensor& input, std::span<const float> weights);

}  // namespace pidcount
