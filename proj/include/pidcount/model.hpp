#pragma once

// PID-Net encoder-decoder and its ablations.
//
// Channel schedule for base width C: encoder blocks output C, 2C, 4C, 8C at
// H, H/2, H/4, H/8 and down-sample to H/16 at 8C; the bottleneck widens to 16C;
// decoder levels 1..4 run at H/8 .. H with 8C .. C channels; a 1x1 head maps C
// to two logits followed by a channel softmax (channel 1 = foreground).
//
// Down-sampling per variant (Cb = block width):
//   PID   reduce(concat[pid(skip), relu(conv(maxpool(skip)))])   5*Cb -> Cb
//   M1    relu(conv(maxpool(skip)))
//   M2    reduce(pid(skip))                                       4*Cb -> Cb
//   UNET  maxpool(skip)
// PID, M1 and M2 use the hierarchical skip pyramid (decoder level i sees every
// shallower encoder block, max-pooled to its resolution, 6-i concat parts);
// UNET uses one same-level skip.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pidcount/checkpoint.hpp"
#include "pidcount/tensor.hpp"

namespace pidcount {

enum class Variant { PID, M1, M2, UNET };

std::string_view variant_name(Variant v);
/// Accepts pid, m1, m2, unet (case-insensitive); throws ConfigError otherwise.
Variant parse_variant(std::string_view name);

struct ModelConfig {
  int in_channels = 1;
  int base_width = 16;
  int levels = 4;
  int classes = 2;
  Variant variant = Variant::PID;
  int reduce_kernel = 3;      // kernel of the 5C -> C (or 4C -> C) reduction
  int down_conv_kernel = 3;   // kernel of the conv that follows max-pooling
  int bottleneck_depth = 2;   // conv+ReLU pairs at H/16

  /// Throws ConfigError on unsupported values.
  void validate() const;
  /// "key = value" lines, readable by from_text().
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);
};

/// One recorded layer of a forward pass.
struct TraceEvent {
  std::string block;  // enc1..enc4, bottleneck, dec1..dec4, head
  std::string op;     // conv3x3, maxpool, pid, concat, upsample, pool-skip, softmax, ...
  int in_channels = 0;
  int out_channels = 0;
  int in_height = 0, in_width = 0;
  int out_height = 0, out_width = 0;
  int parts = 0;        // concat only
  std::string detail;   // free-form annotation (e.g. which skip, role)
};

using Trace = std::vector<TraceEvent>;

/// Output of one encoder block.
struct EncoderOutput {
  Tensor skip;  // two conv+ReLU, full block resolution
  Tensor down;  // half resolution, same channel count
};

class Model {
 public:
  /// Deterministic for a fixed (config, seed).
  static Model build(const ModelConfig& config, std::uint64_t seed);
  static Model from_checkpoint(const Checkpoint& checkpoint);

  const ModelConfig& config() const noexcept { return config_; }

  /// Channels produced by encoder block `level` (1-based).
  int block_width(int level) const;

  std::span<Tensor> parameters() noexcept { return params_; }
  std::span<const Tensor> parameters() const noexcept { return params_; }
  const std::vector<std::string>& parameter_names() const noexcept { return names_; }
  const Tensor& parameter(const std::string& name) const;
  std::size_t parameter_count() const;

  /// Per-pixel two-channel probabilities [N,2,H,W].
  Tensor forward(const Tensor& batch, Trace* trace = nullptr) const;
  /// Pre-softmax logits [N,2,H,W].
  Tensor logits(const Tensor& batch, Trace* trace = nullptr) const;

  EncoderOutput encoder_block(const Tensor& features, int level, Trace* trace = nullptr) const;
  Tensor decoder_block(const Tensor& features, std::span<const Tensor> skips, int level,
                       Trace* trace = nullptr) const;
  /// For decoder levels 1..4 (index 0..3), the skips to concatenate, shallowest first.
  std::vector<std::vector<Tensor>> skip_pyramid(std::span<const Tensor> encoder_skips,
                                                Trace* trace = nullptr) const;

  /// Human-readable layer listing for an input of the given extents.
  std::string topology(int height, int width) const;

  Checkpoint to_checkpoint() const;
  /// Independent copy of all parameter values.
  Model clone() const;
  void zero_grad();

 private:
  Model() = default;
  void add_param(std::string name, Shape shape);
  Tensor conv(const std::string& name, const Tensor& x, int padding, bool with_relu,
              const std::string& block, Trace* trace, std::string detail = {}) const;

  ModelConfig config_;
  std::vector<std::string> names_;
  std::vector<Tensor> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Renders a trace as the text topology dump.
std::string format_trace(const ModelConfig& config, const Trace& trace, int height, int width);

}  // namespace pidcount
