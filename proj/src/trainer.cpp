#include "pidcount/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>

#include "pidcount/errors.hpp"
#include "pidcount/metrics.hpp"
#include "pidcount/postproc.hpp"
#include "pidcount/random.hpp"

namespace pidcount {

void HyperParams::validate() const {
  // lr = 0 is accepted: it is the documented way to run the loop without updates
  if (!(lr >= 0.0f) || !std::isfinite(lr)) throw ConfigError("lr must be >= 0");
  if (!(beta1 >= 0.0f && beta1 < 1.0f) || !(beta2 >= 0.0f && beta2 < 1.0f)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0f)) throw ConfigError("eps must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
}

std::vector<double> batch_iou(const Tensor& probs, const std::vector<const Sample*>& batch) {
  const auto masks = binarize(probs, 0.5f);
  std::vector<double> out;
  out.reserve(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    out.push_back(segmentation_metrics(confusion(masks[i], batch[i]->mask)).jaccard);
  }
  return out;
}

EpochStats evaluate_epoch(const Model& model, const std::vector<Sample>& dataset, int batch_size) {
  if (dataset.empty()) throw ValidationError("evaluate_epoch: empty dataset");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  NoGradGuard no_grad;
  double loss = 0.0, iou = 0.0;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    std::vector<const Sample*> batch;
    for (std::size_t i = start; i < std::min(dataset.size(), start + batch_size); ++i) batch.push_back(&dataset[i]);
    const Tensor probs = model.forward(images_tensor(batch));
    loss += static_cast<double>(cross_entropy_loss(probs, masks_tensor(batch)).item()) * batch.size();
    for (double v : batch_iou(probs, batch)) iou += v;
  }
  const double n = static_cast<double>(dataset.size());
  return {loss / n, iou / n};
}

TrainResult train(Model& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const HyperParams& hyper, const EpochCallback& on_epoch) {
  hyper.validate();
  if (train_set.empty()) throw ValidationError("train: empty training set");
  if (val_set.empty()) throw ValidationError("train: empty validation set");

  AdamState state = AdamState::for_params(model.parameters());
  const AdamOptions adam = hyper.adam();
  TrainingCurves curves;
  std::optional<Model> best;
  std::vector<std::size_t> order(train_set.size());

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(hyper.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch + 1)));
    rng.shuffle(order);

    double loss_sum = 0.0, iou_sum = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size, ++batch_index) {
      std::vector<const Sample*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + hyper.batch_size); ++i) {
        batch.push_back(&train_set[order[i]]);
      }
      model.zero_grad();
      const Tensor probs = model.forward(images_tensor(batch));
      Tensor loss = cross_entropy_loss(probs, masks_tensor(batch));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                             std::to_string(batch_index + 1));
      }
      loss.backward();
      adam_step(model.parameters(), state, adam);
      loss_sum += value * batch.size();
      for (double v : batch_iou(probs, batch)) iou_sum += v;
    }
    curves.train_loss.push_back(loss_sum / static_cast<double>(train_set.size()));
    curves.train_iou.push_back(iou_sum / static_cast<double>(train_set.size()));

    const EpochStats val = evaluate_epoch(model, val_set, hyper.batch_size);
    curves.val_loss.push_back(val.loss);
    curves.val_iou.push_back(val.iou);
    if (curves.best_epoch < 0 || val.iou > curves.val_iou[curves.best_epoch]) {
      curves.best_epoch = epoch;
      best = model.clone();
    }
    if (on_epoch) on_epoch(epoch, curves);
  }
  model.zero_grad();
  return {std::move(*best), std::move(curves)};
}

void write_curves_csv(const std::filesystem::path& path, const TrainingCurves& c) {
  std::ofstream out(path);
  out << "epoch,train_loss,train_iou,val_loss,val_iou\n";
  char buf[256];
  for (std::size_t e = 0; e < c.train_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", e + 1, c.train_loss[e], c.train_iou[e], c.val_loss[e],
                  c.val_iou[e]);
    out << buf;
  }
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace pidcount
