#include "pidcount/adam.hpp"

#include <cmath>

#include "pidcount/errors.hpp"

namespace pidcount {

AdamState AdamState::for_params(std::span<const Tensor> params) {
  AdamState state;
  for (const auto& p : params) {
    state.m.emplace_back(p.numel(), 0.0f);
    state.v.emplace_back(p.numel(), 0.0f);
  }
  return state;
}

void adam_step(std::span<Tensor> params, AdamState& state, const AdamOptions& options) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("Adam state holds " + std::to_string(state.m.size()) +
                         " buffers for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].numel() || state.v[i].size() != params[i].numel()) {
      throw DimensionError("Adam state buffer " + std::to_string(i) + " does not match parameter " +
                           shape_str(params[i].shape()));
    }
  }

  ++state.t;
  const double t = static_cast<double>(state.t);
  const float c1 = static_cast<float>(1.0 - std::pow(static_cast<double>(options.beta1), t));
  const float c2 = static_cast<float>(1.0 - std::pow(static_cast<double>(options.beta2), t));
  const float b1 = options.beta1, b2 = options.beta2;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    const auto g = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const float m_hat = m[j] / c1;
      const float v_hat = v[j] / c2;
      w[j] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

}  // namespace pidcount
