#pragma once

// Finite-difference gradient checks. Analytic gradients come from the float32
// engine; numeric gradients are central differences of the double-precision
// reference in reference.hpp, so float rounding does not swamp the quotient.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pidcount/model.hpp"
#include "pidcount/tensor.hpp"
#include "support/reference.hpp"

namespace gradcheck {

struct Report {
  std::string name;
  int trials = 0;
  double worst = 0.0;  // largest per-trial relative error
};

/// Probe weights for reducing an op output to a scalar.
inline std::vector<double> probe(std::size_t n, pidcount::Rng& rng) {
  std::vector<double> w(n);
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return w;
}

inline std::vector<float> to_float(const std::vector<double>& w) { return {w.begin(), w.end()}; }

/// Generic single-op check: `engine` builds the float output from tensors
/// holding `inputs`; `reference` evaluates the same op in double. The scalar
/// checked is the probe-weighted sum of the output.
inline double check_once(
    std::vector<ref::T> inputs,
    const std::function<pidcount::Tensor(const std::vector<pidcount::Tensor>&)>& engine,
    const std::function<ref::T(const std::vector<ref::T>&)>& reference, pidcount::Rng& rng) {
  std::vector<pidcount::Tensor> leaves;
  for (const auto& t : inputs) leaves.push_back(ref::to_tensor(t, true));
  auto out = engine(leaves);
  const auto w = probe(out.numel(), rng);
  pidcount::weighted_sum(out, to_float(w)).backward();

  std::vector<double> analytic, numeric;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    for (std::size_t i = 0; i < inputs[a].v.size(); ++i) {
      analytic.push_back(leaves[a].grad()[i]);
      const double x0 = inputs[a].v[i];
      auto f = [&](double v) {
        auto perturbed = inputs;
        perturbed[a].v[i] = v;
        return ref::dot(reference(perturbed), w);
      };
      numeric.push_back(ref::central_difference_stable(f, x0));
    }
  }
  return ref::relative_error(analytic, numeric);
}

inline std::vector<Report> check_ops(int trials, std::uint64_t seed) {
  using pidcount::Tensor;
  pidcount::Rng rng(seed);
  std::vector<Report> reports;
  auto run = [&](const std::string& name, const std::function<double()>& trial) {
    Report r{name, trials, 0.0};
    for (int t = 0; t < trials; ++t) r.worst = std::max(r.worst, trial());
    reports.push_back(r);
  };
  auto small = [&](int max_hw) { return 2 * static_cast<int>(1 + rng.below(max_hw / 2)); };

  run("conv2d", [&] {
    const int cin = 1 + static_cast<int>(rng.below(3)), cout = 1 + static_cast<int>(rng.below(3));
    const int k = rng.below(3) == 0 ? 1 : 3;
    const int stride = 1 + static_cast<int>(rng.below(2));
    const int pad = k == 1 ? 0 : static_cast<int>(rng.below(2));
    const int H = std::max(small(4), 3), W = std::max(small(4), 3);
    return check_once(
        {ref::random({1 + static_cast<int>(rng.below(2)), cin, H, W}, rng),
         ref::random({cout, cin, k, k}, rng), ref::random({cout}, rng)},
        [&](const std::vector<Tensor>& in) { return pidcount::conv2d(in[0], in[1], in[2], stride, pad); },
        [&](const std::vector<ref::T>& in) { return ref::conv2d(in[0], in[1], &in[2], stride, pad); }, rng);
  });
  run("conv_transpose2d", [&] {
    const int cin = 1 + static_cast<int>(rng.below(3)), cout = 1 + static_cast<int>(rng.below(3));
    return check_once(
        {ref::random({1, cin, 1 + static_cast<int>(rng.below(2)), 1 + static_cast<int>(rng.below(2))}, rng),
         ref::random({cin, cout, 3, 3}, rng), ref::random({cout}, rng)},
        [](const std::vector<Tensor>& in) { return pidcount::conv_transpose2d(in[0], in[1], in[2]); },
        [](const std::vector<ref::T>& in) { return ref::conv_transpose2d(in[0], in[1], &in[2]); }, rng);
  });
  run("maxpool2d", [&] {
    return check_once(
        {ref::random({1, 1 + static_cast<int>(rng.below(2)), small(4), small(4)}, rng)},
        [](const std::vector<Tensor>& in) { return pidcount::maxpool2d(in[0]); },
        [](const std::vector<ref::T>& in) { return ref::maxpool(in[0]); }, rng);
  });
  run("pid_downsample", [&] {
    return check_once(
        {ref::random({1, 1 + static_cast<int>(rng.below(2)), small(4), small(4)}, rng)},
        [](const std::vector<Tensor>& in) { return pidcount::pid_downsample(in[0]); },
        [](const std::vector<ref::T>& in) { return ref::pid(in[0]); }, rng);
  });
  run("relu", [&] {
    return check_once(
        {ref::random({1, 2, small(4), small(4)}, rng)},
        [](const std::vector<Tensor>& in) { return pidcount::relu(in[0]); },
        [](const std::vector<ref::T>& in) { return ref::relu(in[0]); }, rng);
  });
  run("concat_channels", [&] {
    const int H = small(4), W = small(4);
    return check_once(
        {ref::random({1, 1, H, W}, rng), ref::random({1, 2, H, W}, rng), ref::random({1, 1, H, W}, rng)},
        [](const std::vector<Tensor>& in) { return pidcount::concat_channels(in); },
        [](const std::vector<ref::T>& in) { return ref::concat(in); }, rng);
  });
  run("softmax_channels", [&] {
    return check_once(
        {ref::random({1, 2 + static_cast<int>(rng.below(2)), small(4), small(4)}, rng, -3, 3)},
        [](const std::vector<Tensor>& in) { return pidcount::softmax_channels(in[0]); },
        [](const std::vector<ref::T>& in) { return ref::softmax(in[0]); }, rng);
  });
  run("cross_entropy_loss", [&] {
    const int H = small(4), W = small(4);
    std::vector<double> target(static_cast<std::size_t>(H) * W);
    for (auto& t : target) t = static_cast<double>(rng.below(2));
    // probabilities in (0.05, 0.95): away from the clamp
    ref::T probs({1, 2, H, W});
    for (int i = 0; i < H * W; ++i) {
      const double q = static_cast<float>(rng.uniform(0.05, 0.95));
      probs.v[i] = 1.0 - q;
      probs.v[H * W + i] = q;
    }
    return check_once(
        {probs},
        [&](const std::vector<Tensor>& in) {
          return pidcount::cross_entropy_loss(in[0], Tensor::from_data({1, H, W}, to_float(target)));
        },
        [&](const std::vector<ref::T>& in) {
          ref::T out({1});
          out.v[0] = ref::cross_entropy(in[0], target);
          return out;
        },
        rng);
  });
  return reports;
}

/// Full-network check: cross-entropy of the model's softmax output against a
/// random mask, differentiated with respect to `coords` randomly chosen
/// parameter coordinates per trial (a fresh model, input and target each
/// trial).
inline Report check_network(pidcount::ModelConfig config, int size, int trials, int coords,
                            std::uint64_t seed) {
  using pidcount::Tensor;
  pidcount::Rng rng(seed);
  Report report{"network/" + std::string(pidcount::variant_name(config.variant)), trials, 0.0};
  for (int t = 0; t < trials; ++t) {
    auto model = pidcount::Model::build(config, rng.next());
    // He-scaled redraw: at the default init a 20-layer ReLU stack shrinks the
    // signal until parameter gradients sit at float32 rounding level. The head
    // stays small so no pixel saturates into the probability clamp, whose
    // threshold differs between float and double.
    for (std::size_t k = 0; k < model.parameters().size(); ++k) {
      auto& p = model.parameters()[k];
      const auto& s = p.shape();
      const double fan_in = s.size() == 4 ? static_cast<double>(s[1]) * s[2] * s[3] : 0.0;
      double bound = fan_in > 0 ? std::sqrt(6.0 / fan_in) : 0.1;
      if (model.parameter_names()[k].rfind("head.", 0) == 0) bound *= 0.1;
      for (auto& v : p.mutable_data()) v = static_cast<float>(rng.uniform(-bound, bound));
    }
    auto input = ref::random({1, config.in_channels, size, size}, rng, 0.0, 1.0);
    // a disk-shaped mask: per-pixel loss gradients share a sign over large
    // regions, so parameter gradients are not sums of cancelling noise
    std::vector<double> target(static_cast<std::size_t>(size) * size);
    const double cy = rng.uniform(0.0, size), cx = rng.uniform(0.0, size), r = rng.uniform(2.0, size / 2.0);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        target[static_cast<std::size_t>(y) * size + x] = (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r;

    model.zero_grad();
    auto probs = model.forward(ref::to_tensor(input));
    pidcount::cross_entropy_loss(probs, Tensor::from_data({1, size, size}, to_float(target))).backward();

    auto params = ref::params_of(model);
    std::vector<double> analytic, numeric;
    for (int c = 0; c < coords; ++c) {
      const std::size_t which = rng.below(model.parameters().size());
      const std::string& name = model.parameter_names()[which];
      const std::size_t i = rng.below(model.parameters()[which].numel());
      analytic.push_back(model.parameters()[which].grad()[i]);
      const double x0 = params[name].v[i];
      auto f = [&](double v) {
        params[name].v[i] = v;
        const double loss = ref::cross_entropy(ref::softmax(ref::network_logits(config, params, input)), target);
        params[name].v[i] = x0;
        return loss;
      };
      numeric.push_back(ref::central_difference_stable(f, x0));
    }
    report.worst = std::max(report.worst, ref::relative_error(analytic, numeric));
  }
  return report;
}

}  // namespace gradcheck
