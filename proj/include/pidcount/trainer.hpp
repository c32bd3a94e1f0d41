#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "pidcount/adam.hpp"
#include "pidcount/data.hpp"
#include "pidcount/model.hpp"

namespace pidcount {

struct HyperParams {
  float lr = 0.001f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  int batch_size = 8;
  int epochs = 100;
  std::uint64_t seed = 0;

  void validate() const;
  AdamOptions adam() const { return {lr, beta1, beta2, eps}; }
};

struct TrainingCurves {
  std::vector<double> train_loss, train_iou, val_loss, val_iou;
  int best_epoch = -1;  // 0-based index of the highest val IoU, earliest on ties
};

struct EpochStats {
  double loss = 0.0;
  double iou = 0.0;
};

struct TrainResult {
  Model best;
  TrainingCurves curves;
};

using EpochCallback = std::function<void(int epoch, const TrainingCurves& curves)>;

/// Mini-batch Adam on the two-class cross-entropy. `model` ends with the
/// last epoch's weights; the returned model is the best-validation copy.
/// Throws NumericalError naming the epoch and batch on a non-finite loss.
TrainResult train(Model& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const HyperParams& hyper, const EpochCallback& on_epoch = {});

/// Mean per-image loss and IoU (binarized at 0.5) without recording gradients.
EpochStats evaluate_epoch(const Model& model, const std::vector<Sample>& dataset, int batch_size = 8);

/// Per-image IoU of the binarized foreground channel against the batch masks.
std::vector<double> batch_iou(const Tensor& probs, const std::vector<const Sample*>& batch);

void write_curves_csv(const std::filesystem::path& path, const TrainingCurves& curves);

}  // namespace pidcount
