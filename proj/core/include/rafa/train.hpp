#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rafa/augment.hpp"
#include "rafa/dataset.hpp"
#include "rafa/metrics.hpp"
#include "rafa/model.hpp"

namespace rafa {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 8;
  double lr_initial = 0.008;
  std::size_t lr_drop_epoch = 50;
  double lr_drop_factor = 10.0;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  bool augment = true;
  EraseConfig augmentation;

  void validate() const;
};

/// lr_initial before lr_drop_epoch, lr_initial / lr_drop_factor from then on.
/// Epochs are zero-based.
double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

/// Momentum buffers keyed by parameter name.
struct SgdState {
  std::map<std::string, std::vector<double>> velocity;
};

/// v = momentum * v + grad; param -= lr * v; then clears every gradient.
/// ContractError if a parameter carries no gradient.
void sgd_step(std::span<NamedTensor> params, double lr, double momentum, SgdState& state);

struct EpochLog {
  std::size_t epoch = 0;  // one-based in the CSV
  double lr = 0.0;
  double train_loss = 0.0;
  double train_top1 = 0.0;
  std::optional<double> val_top1;
  std::optional<double> val_loss;  // mean cross-entropy; not written to the CSV
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::vector<NamedTensor> best;  // detached snapshot of the selected epoch
  std::size_t best_epoch = 0;
};

/// Model input for one sample: augmented (training) or center-cropped.
ForwardResult forward_sample(const RafaModel& model, const Sample& sample,
                             const TrainConfig& cfg, bool training, Rng* rng);

/// Mini-batch SGD over shuffled samples. Snapshots the parameters of the
/// epoch with the best validation top-1, ties broken by lower validation
/// loss (the last epoch without `val`).
TrainResult train(RafaModel& model, const Dataset& train_set, const Dataset* val_set,
                  const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Inference-mode metrics (no augmentation, no dropout).
Metrics evaluate(const RafaModel& model, const Dataset& data, const TrainConfig& cfg,
                 std::size_t topk = 5);

/// CSV header: epoch,lr,train_loss,train_top1,val_top1
void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log);

}  // namespace rafa
