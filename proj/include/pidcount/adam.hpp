#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pidcount/tensor.hpp"

namespace pidcount {

struct AdamOptions {
  float lr = 0.001f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// First/second moment buffers, one per parameter, plus the step counter.
struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::int64_t t = 0;

  /// Zeroed buffers matching `params`.
  static AdamState for_params(std::span<const Tensor> params);
};

/// One bias-corrected Adam update using each parameter's accumulated grad.
/// Throws DimensionError when the state does not match the parameters.
void adam_step(std::span<Tensor> params, AdamState& state, const AdamOptions& options = {});

}  // namespace pidcount
