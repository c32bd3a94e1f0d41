#include "pidcount/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <unordered_set>

#include "kernels.hpp"
#include "pidcount/errors.hpp"

namespace pidcount {

using detail::Node;

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw DimensionError("negative extent in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

// ---- Tensor handle --------------------------------------------------------

namespace {

thread_local bool t_grad_enabled = true;

std::shared_ptr<Node> make_node(Shape shape, std::vector<float> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) node->ensure_grad();
  return node;
}

const Node& checked(const std::shared_ptr<Node>& node) {
  if (!node) throw StateError("use of an undefined tensor");
  return *node;
}

}  // namespace

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<float>(n, 0.0f), requires_grad));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<float>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
  return Tensor(make_node(std::move(shape), std::move(data), requires_grad));
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

int Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis out of range for shape " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).data.size(); }

std::span<const float> Tensor::data() const { return checked(node_).data; }

std::span<float> Tensor::mutable_data() {
  checked(node_);
  if (node_->backward_fn) throw StateError("cannot overwrite the values of a non-leaf tensor");
  return node_->data;
}

float Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

std::span<const float> Tensor::grad() const {
  checked(node_);
  node_->ensure_grad();
  return node_->grad;
}

std::span<float> Tensor::mutable_grad() {
  checked(node_);
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  checked(node_);
  node_->grad.assign(node_->data.size(), 0.0f);
}

Tensor Tensor::detach() const {
  const Node& n = checked(node_);
  return Tensor(make_node(n.shape, n.data, false));
}

void Tensor::backward() {
  checked(node_);
  if (node_->consumed) throw StateError("backward() called on an already consumed graph");
  if (!node_->requires_grad) throw StateError("backward() on a tensor that does not require grad");
  if (node_->data.size() != 1) {
    throw DimensionError("backward() needs a scalar root, got " + shape_str(node_->shape));
  }

  // Iterative post-order DFS over interior nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->backward_fn && !visited.count(p)) {
        if (p->consumed) throw StateError("backward() reached a consumed graph");
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad.assign(1, 1.0f);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
  for (Node* n : order) {
    n->backward_fn = nullptr;
    n->parents.clear();
    n->consumed = true;
    if (n != node_.get()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

// ---- op helpers -------------------------------------------------------------

namespace {

bool tracks(const Tensor& t) { return t.defined() && t.requires_grad(); }

/// Creates an op result; attaches history only when grad mode is on and a
/// parent needs it.
Tensor make_result(Shape shape, std::vector<float> data, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward_fn) {
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || tracks(p);
  }
  auto node = make_node(std::move(shape), std::move(data), false);
  if (needs) {
    node->requires_grad = true;
    for (auto& p : parents) {
      if (p.defined()) node->parents.push_back(p.node());
    }
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void require_4d(const Tensor& t, const char* what) {
  if (t.ndim() != 4) {
    throw DimensionError(std::string(what) + " expects a 4-D tensor, got " + shape_str(t.shape()));
  }
}

void require_even(const Tensor& t, const char* what) {
  if (t.dim(2) % 2 != 0 || t.dim(3) % 2 != 0) {
    throw DimensionError(std::string(what) + " needs even spatial extents, got " +
                         shape_str(t.shape()));
  }
}

std::vector<float>* grad_target(const std::shared_ptr<Node>& n) {
  if (!n || !n->requires_grad) return nullptr;
  n->ensure_grad();
  return &n->grad;
}

}  // namespace

// ---- convolution --------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  require_4d(input, "conv2d");
  if (weight.ndim() != 4) throw DimensionError("conv2d weight must be [Cout,Cin,k,k]");
  const int N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int Cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != Cin) {
    throw DimensionError("conv2d channel mismatch: input " + shape_str(input.shape()) +
                         ", weight " + shape_str(weight.shape()));
  }
  if (weight.dim(3) != k || k % 2 == 0) throw DimensionError("conv2d kernel must be square and odd");
  if (stride < 1 || padding < 0) throw DimensionError("conv2d stride/padding out of range");
  if (H + 2 * padding < k || W + 2 * padding < k) {
    throw DimensionError("conv2d kernel larger than padded input " + shape_str(input.shape()));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != Cout)) {
    throw DimensionError("conv2d bias must be [Cout]");
  }

  const kernels::ConvGeometry g{Cin, H, W, k, stride, padding, (H + 2 * padding - k) / stride + 1,
                                (W + 2 * padding - k) / stride + 1};
  const int P = g.out_height * g.out_width;
  const int K = Cin * k * k;
  const bool pointwise = (k == 1 && stride == 1 && padding == 0);

  std::vector<float> out(static_cast<std::size_t>(N) * Cout * P, 0.0f);
  std::vector<float> cols(pointwise ? 0 : static_cast<std::size_t>(K) * P);
  const float* x = input.data().data();
  const float* w = weight.data().data();
  for (int n = 0; n < N; ++n) {
    float* o = out.data() + static_cast<std::size_t>(n) * Cout * P;
    if (bias.defined()) {
      const float* b = bias.data().data();
      for (int co = 0; co < Cout; ++co) std::fill(o + co * P, o + (co + 1) * P, b[co]);
    }
    const float* xn = x + static_cast<std::size_t>(n) * Cin * H * W;
    const float* src = xn;
    if (!pointwise) {
      kernels::im2col(g, xn, cols.data());
      src = cols.data();
    }
    kernels::gemm_nn(Cout, P, K, w, src, o);
  }

  auto in_node = input.node();
  auto w_node = weight.node();
  auto b_node = bias.defined() ? bias.node() : nullptr;
  return make_result(
      {N, Cout, g.out_height, g.out_width}, std::move(out), {input, weight, bias},
      [in_node, w_node, b_node, g, N, Cout, P, K, pointwise](Node& self) {
        auto* gx = grad_target(in_node);
        auto* gw = grad_target(w_node);
        auto* gb = grad_target(b_node);
        const std::size_t in_stride = static_cast<std::size_t>(g.channels) * g.height * g.width;
        std::vector<float> cols(pointwise ? 0 : static_cast<std::size_t>(K) * P);
        std::vector<float> dcols(gx && !pointwise ? static_cast<std::size_t>(K) * P : 0);
        for (int n = 0; n < N; ++n) {
          const float* go = self.grad.data() + static_cast<std::size_t>(n) * Cout * P;
          if (gb) {
            for (int co = 0; co < Cout; ++co) {
              double s = 0.0;
              for (int p = 0; p < P; ++p) s += go[co * P + p];
              (*gb)[co] += static_cast<float>(s);
            }
          }
          const float* xn = in_node->data.data() + n * in_stride;
          if (gw) {
            const float* src = xn;
            if (!pointwise) {
              kernels::im2col(g, xn, cols.data());
              src = cols.data();
            }
            kernels::gemm_nt(Cout, K, P, go, src, gw->data());
          }
          if (gx) {
            float* dx = gx->data() + n * in_stride;
            if (pointwise) {
              kernels::gemm_tn(K, P, Cout, w_node->data.data(), go, dx);
            } else {
              std::fill(dcols.begin(), dcols.end(), 0.0f);
              kernels::gemm_tn(K, P, Cout, w_node->data.data(), go, dcols.data());
              kernels::col2im(g, dcols.data(), dx);
            }
          }
        }
      });
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_4d(input, "conv_transpose2d");
  if (weight.ndim() != 4 || weight.dim(2) != 3 || weight.dim(3) != 3) {
    throw DimensionError("conv_transpose2d weight must be [Cin,Cout,3,3]");
  }
  const int N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (weight.dim(0) != Cin) {
    throw DimensionError("conv_transpose2d channel mismatch: input " + shape_str(input.shape()) +
                         ", weight " + shape_str(weight.shape()));
  }
  const int Cout = weight.dim(1);
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != Cout)) {
    throw DimensionError("conv_transpose2d bias must be [Cout]");
  }
  // Output geometry seen as the input of a stride-2 conv that yields H x W.
  const kernels::ConvGeometry g{Cout, 2 * H, 2 * W, 3, 2, 1, H, W};
  const int P = H * W;
  const int K = Cout * 9;
  const int OP = 4 * P;

  std::vector<float> out(static_cast<std::size_t>(N) * Cout * OP, 0.0f);
  std::vector<float> cols(static_cast<std::size_t>(K) * P);
  const float* x = input.data().data();
  const float* w = weight.data().data();
  for (int n = 0; n < N; ++n) {
    float* o = out.data() + static_cast<std::size_t>(n) * Cout * OP;
    std::fill(cols.begin(), cols.end(), 0.0f);
    kernels::gemm_tn(K, P, Cin, w, x + static_cast<std::size_t>(n) * Cin * P, cols.data());
    kernels::col2im(g, cols.data(), o);
    if (bias.defined()) {
      const float* b = bias.data().data();
      for (int co = 0; co < Cout; ++co) {
        for (int p = 0; p < OP; ++p) o[co * OP + p] += b[co];
      }
    }
  }

  auto in_node = input.node();
  auto w_node = weight.node();
  auto b_node = bias.defined() ? bias.node() : nullptr;
  return make_result(
      {N, Cout, 2 * H, 2 * W}, std::move(out), {input, weight, bias},
      [in_node, w_node, b_node, g, N, Cin, Cout, P, K, OP](Node& self) {
        auto* gx = grad_target(in_node);
        auto* gw = grad_target(w_node);
        auto* gb = grad_target(b_node);
        std::vector<float> gcols(static_cast<std::size_t>(K) * P);
        for (int n = 0; n < N; ++n) {
          const float* go = self.grad.data() + static_cast<std::size_t>(n) * Cout * OP;
          if (gb) {
            for (int co = 0; co < Cout; ++co) {
              double s = 0.0;
              for (int p = 0; p < OP; ++p) s += go[co * OP + p];
              (*gb)[co] += static_cast<float>(s);
            }
          }
          if (!gx && !gw) continue;
          kernels::im2col(g, go, gcols.data());
          if (gx) {
            kernels::gemm_nn(Cin, P, K, w_node->data.data(), gcols.data(),
                             gx->data() + static_cast<std::size_t>(n) * Cin * P);
          }
          if (gw) {
            kernels::gemm_nt(Cin, K, P, in_node->data.data() + static_cast<std::size_t>(n) * Cin * P,
                             gcols.data(), gw->data());
          }
        }
      });
}

// ---- pooling and rearrangement ----------------------------------------------

Tensor maxpool2d(const Tensor& input) {
  require_4d(input, "maxpool2d");
  require_even(input, "maxpool2d");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int Ho = H / 2, Wo = W / 2;
  const std::size_t planes = static_cast<std::size_t>(N) * C;
  std::vector<float> out(planes * Ho * Wo);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
  const float* x = input.data().data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const std::size_t base = pl * H * W;
    for (int i = 0; i < Ho; ++i) {
      for (int j = 0; j < Wo; ++j) {
        std::size_t best = base + static_cast<std::size_t>(2 * i) * W + 2 * j;
        const std::size_t cand[3] = {best + 1, best + W, best + W + 1};
        for (std::size_t c : cand) {
          if (x[c] > x[best]) best = c;
        }
        const std::size_t o = pl * Ho * Wo + static_cast<std::size_t>(i) * Wo + j;
        out[o] = x[best];
        (*argmax)[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  auto in_node = input.node();
  return make_result({N, C, Ho, Wo}, std::move(out), {input}, [in_node, argmax](Node& self) {
    auto* gx = grad_target(in_node);
    if (!gx) return;
    for (std::size_t o = 0; o < argmax->size(); ++o) (*gx)[(*argmax)[o]] += self.grad[o];
  });
}

namespace {

/// Index map shared by pid_downsample and pid_reassemble: for each element of
/// the down-sampled layout, its flat index in the full-resolution layout.
void for_each_pid_pair(int N, int C, int H, int W,
                       const std::function<void(std::size_t, std::size_t)>& fn) {
  const int Ho = H / 2, Wo = W / 2;
  std::size_t low = 0;
  for (int n = 0; n < N; ++n) {
    for (int q = 0; q < 4; ++q) {
      const int dy = q / 2, dx = q % 2;
      for (int c = 0; c < C; ++c) {
        const std::size_t plane = (static_cast<std::size_t>(n) * C + c) * H * W;
        for (int i = 0; i < Ho; ++i) {
          const std::size_t row = plane + static_cast<std::size_t>(2 * i + dy) * W + dx;
          for (int j = 0; j < Wo; ++j) fn(low++, row + 2 * j);
        }
      }
    }
  }
}

}  // namespace

Tensor pid_downsample(const Tensor& input) {
  require_4d(input, "pid_downsample");
  require_even(input, "pid_downsample");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  std::vector<float> out(input.numel());
  const float* x = input.data().data();
  for_each_pid_pair(N, C, H, W, [&](std::size_t low, std::size_t high) { out[low] = x[high]; });
  auto in_node = input.node();
  return make_result({N, 4 * C, H / 2, W / 2}, std::move(out), {input},
                     [in_node, N, C, H, W](Node& self) {
                       auto* gx = grad_target(in_node);
                       if (!gx) return;
                       for_each_pid_pair(N, C, H, W, [&](std::size_t low, std::size_t high) {
                         (*gx)[high] += self.grad[low];
                       });
                     });
}

Tensor pid_reassemble(const Tensor& input) {
  require_4d(input, "pid_reassemble");
  if (input.dim(1) % 4 != 0) {
    throw DimensionError("pid_reassemble needs a channel count divisible by 4, got " +
                         shape_str(input.shape()));
  }
  const int N = input.dim(0), C = input.dim(1) / 4, H = 2 * input.dim(2), W = 2 * input.dim(3);
  std::vector<float> out(input.numel());
  const float* x = input.data().data();
  for_each_pid_pair(N, C, H, W, [&](std::size_t low, std::size_t high) { out[high] = x[low]; });
  auto in_node = input.node();
  return make_result({N, C, H, W}, std::move(out), {input}, [in_node, N, C, H, W](Node& self) {
    auto* gx = grad_target(in_node);
    if (!gx) return;
    for_each_pid_pair(N, C, H, W, [&](std::size_t low, std::size_t high) {
      (*gx)[low] += self.grad[high];
    });
  });
}

// ---- elementwise and channel ops ---------------------------------------------

Tensor relu(const Tensor& input) {
  const auto x = input.data();
  std::vector<float> out(x.size());
  // NaN passes through so that a diverged run still surfaces in the loss
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0f || std::isnan(x[i]) ? x[i] : 0.0f;
  auto in_node = input.node();
  return make_result(input.shape(), std::move(out), {input}, [in_node](Node& self) {
    auto* gx = grad_target(in_node);
    if (!gx) return;
    const auto& xd = in_node->data;
    for (std::size_t i = 0; i < xd.size(); ++i) {
      if (xd[i] > 0.0f) (*gx)[i] += self.grad[i];
    }
  });
}

Tensor concat_channels(std::span<const Tensor> inputs) {
  if (inputs.empty()) throw DimensionError("concat_channels needs at least one input");
  for (const auto& t : inputs) require_4d(t, "concat_channels");
  const int N = inputs[0].dim(0), H = inputs[0].dim(2), W = inputs[0].dim(3);
  int total = 0;
  for (const auto& t : inputs) {
    if (t.dim(0) != N || t.dim(2) != H || t.dim(3) != W) {
      throw DimensionError("concat_channels extent mismatch: " + shape_str(inputs[0].shape()) +
                           " vs " + shape_str(t.shape()));
    }
    total += t.dim(1);
  }
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<float> out(static_cast<std::size_t>(N) * total * plane);
  std::vector<int> offsets;
  int offset = 0;
  for (const auto& t : inputs) {
    offsets.push_back(offset);
    const int C = t.dim(1);
    const float* src = t.data().data();
    for (int n = 0; n < N; ++n) {
      std::copy_n(src + static_cast<std::size_t>(n) * C * plane, C * plane,
                  out.data() + (static_cast<std::size_t>(n) * total + offset) * plane);
    }
    offset += C;
  }
  std::vector<Tensor> parents(inputs.begin(), inputs.end());
  std::vector<std::shared_ptr<Node>> nodes;
  for (const auto& t : inputs) nodes.push_back(t.node());
  return make_result({N, total, H, W}, std::move(out), parents,
                     [nodes, offsets, N, total, plane](Node& self) {
                       for (std::size_t b = 0; b < nodes.size(); ++b) {
                         auto* gx = grad_target(nodes[b]);
                         if (!gx) continue;
                         const int C = nodes[b]->shape[1];
                         for (int n = 0; n < N; ++n) {
                           const float* src = self.grad.data() +
                                              (static_cast<std::size_t>(n) * total + offsets[b]) * plane;
                           float* dst = gx->data() + static_cast<std::size_t>(n) * C * plane;
                           for (std::size_t i = 0; i < C * plane; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor softmax_channels(const Tensor& logits) {
  require_4d(logits, "softmax_channels");
  const int N = logits.dim(0), K = logits.dim(1);
  if (K < 2) throw DimensionError("softmax_channels needs at least 2 channels");
  const std::size_t plane = static_cast<std::size_t>(logits.dim(2)) * logits.dim(3);
  const float* z = logits.data().data();
  std::vector<float> out(logits.numel());
  for (int n = 0; n < N; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * K * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      float mx = z[base + p];
      for (int k = 1; k < K; ++k) mx = std::max(mx, z[base + k * plane + p]);
      double total = 0.0;
      for (int k = 0; k < K; ++k) total += std::exp(static_cast<double>(z[base + k * plane + p]) - mx);
      for (int k = 0; k < K; ++k) {
        out[base + k * plane + p] =
            static_cast<float>(std::exp(static_cast<double>(z[base + k * plane + p]) - mx) / total);
      }
    }
  }
  auto in_node = logits.node();
  auto probs = std::make_shared<std::vector<float>>(out);
  return make_result(logits.shape(), std::move(out), {logits},
                     [in_node, probs, N, K, plane](Node& self) {
                       auto* gx = grad_target(in_node);
                       if (!gx) return;
                       const auto& pr = *probs;
                       for (int n = 0; n < N; ++n) {
                         const std::size_t base = static_cast<std::size_t>(n) * K * plane;
                         for (std::size_t p = 0; p < plane; ++p) {
                           double dot = 0.0;
                           for (int k = 0; k < K; ++k) {
                             dot += static_cast<double>(self.grad[base + k * plane + p]) *
                                    pr[base + k * plane + p];
                           }
                           for (int k = 0; k < K; ++k) {
                             const std::size_t i = base + k * plane + p;
                             (*gx)[i] += static_cast<float>(pr[i] * (self.grad[i] - dot));
                           }
                         }
                       }
                     });
}

Tensor cross_entropy_loss(const Tensor& probs, const Tensor& target) {
  require_4d(probs, "cross_entropy_loss");
  const int N = probs.dim(0), H = probs.dim(2), W = probs.dim(3);
  if (probs.dim(1) != 2) throw DimensionError("cross_entropy_loss expects two channels");
  if (target.shape() != Shape{N, H, W}) {
    throw DimensionError("cross_entropy_loss target " + shape_str(target.shape()) +
                         " does not match probabilities " + shape_str(probs.shape()));
  }
  const auto y = target.data();
  for (float v : y) {
    if (v != 0.0f && v != 1.0f) throw ValidationError("cross_entropy_loss target must be 0/1");
  }
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const std::size_t count = static_cast<std::size_t>(N) * plane;
  const float* pr = probs.data().data();
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    const float* fg = pr + (static_cast<std::size_t>(n) * 2 + 1) * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      const double q = std::clamp(static_cast<double>(fg[p]), static_cast<double>(kProbabilityEpsilon),
                                  1.0 - static_cast<double>(kProbabilityEpsilon));
      const double t = y[n * plane + p];
      total -= t * std::log(q) + (1.0 - t) * std::log(1.0 - q);
    }
  }
  const double mean = total / static_cast<double>(count);

  auto p_node = probs.node();
  auto t_node = target.node();
  return make_result({1}, {static_cast<float>(mean)}, {probs},
                     [p_node, t_node, N, plane, count](Node& self) {
                       auto* gp = grad_target(p_node);
                       if (!gp) return;
                       const double scale = self.grad[0] / static_cast<double>(count);
                       const double lo = kProbabilityEpsilon, hi = 1.0 - kProbabilityEpsilon;
                       for (int n = 0; n < N; ++n) {
                         const std::size_t fg = (static_cast<std::size_t>(n) * 2 + 1) * plane;
                         for (std::size_t p = 0; p < plane; ++p) {
                           const double q = p_node->data[fg + p];
                           if (q < lo || q > hi) continue;  // clamped: zero derivative
                           const double t = t_node->data[n * plane + p];
                           (*gp)[fg + p] += static_cast<float>(scale * (-t / q + (1.0 - t) / (1.0 - q)));
                         }
                       }
                     });
}

Tensor sum(const Tensor& input) {
  double s = 0.0;
  for (float v : input.data()) s += v;
  auto in_node = input.node();
  return make_result({1}, {static_cast<float>(s)}, {input}, [in_node](Node& self) {
    auto* gx = grad_target(in_node);
    if (!gx) return;
    for (auto& g : *gx) g += self.grad[0];
  });
}

Tensor weighted_sum(const Tensor& input, std::span<const float> weights) {
  if (weights.size() != input.numel()) throw DimensionError("weighted_sum weight length mismatch");
  const auto x = input.data();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<double>(x[i]) * weights[i];
  auto in_node = input.node();
  auto w = std::make_shared<std::vector<float>>(weights.begin(), weights.end());
  return make_result({1}, {static_cast<float>(s)}, {input}, [in_node, w](Node& self) {
    auto* gx = grad_target(in_node);
    if (!gx) return;
    for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += self.grad[0] * (*w)[i];
  });
}

}  // namespace pidcount
