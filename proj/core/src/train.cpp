#include "rafa/train.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "rafa/error.hpp"

namespace rafa {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(lr_initial > 0.0)) throw ConfigError("initial learning rate must be positive");
  if (lr_drop_epoch > epochs) throw ConfigError("lr drop epoch exceeds the epoch budget");
  if (!(lr_drop_factor > 0.0)) throw ConfigError("lr drop factor must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  augmentation.validate();
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  if (epoch >= cfg.epochs) {
    throw ContractError("epoch " + std::to_string(epoch) + " outside schedule of " +
                        std::to_string(cfg.epochs));
  }
  return epoch < cfg.lr_drop_epoch ? cfg.lr_initial : cfg.lr_initial / cfg.lr_drop_factor;
}

void sgd_step(std::span<NamedTensor> params, double lr, double momentum, SgdState& state) {
  for (auto& p : params) {
    if (!p.tensor.has_grad()) throw ContractError("parameter '" + p.name + "' has no gradient");
  }
  for (auto& p : params) {
    auto& v = state.velocity[p.name];
    auto grad = p.tensor.grad();
    if (v.size() != grad.size()) v.assign(grad.size(), 0.0);
    auto values = p.tensor.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      v[i] = momentum * v[i] + grad[i];
      values[i] -= lr * v[i];
    }
    p.tensor.zero_grad();
  }
}

ForwardResult forward_sample(const RafaModel& model, const Sample& sample,
                             const TrainConfig& cfg, bool training, Rng* rng) {
  const ModelConfig& mc = model.config();
  if (mc.backbone.kind == BackboneKind::file_features) {
    return model.forward_grid(sample.features, training, rng);
  }
  Image input;
  if (training && cfg.augment) {
    if (!rng) throw ContractError("training forward needs an Rng");
    input = augment_pipeline(sample.image, cfg.augmentation, *rng, true);
  } else {
    input = center_crop(sample.image, cfg.augmentation.crop_h, cfg.augmentation.crop_w);
  }
  return model.forward(input, training, rng);
}

namespace {

struct ValidationScore {
  double top1 = 0.0;
  double loss = 0.0;
};

ValidationScore validate_epoch(const RafaModel& model, const Dataset& val, const TrainConfig& cfg) {
  NoGradGuard no_grad;
  ValidationScore score;
  std::size_t correct = 0;
  for (const auto& sample : val.samples) {
    const ForwardResult out = forward_sample(model, sample, cfg, false, nullptr);
    score.loss += cross_entropy(out.prediction.probs, sample.label).item();
    if (out.prediction.predicted_class == sample.label) ++correct;
  }
  const auto n = static_cast<double>(val.size());
  score.top1 = static_cast<double>(correct) / n;
  score.loss /= n;
  return score;
}

std::vector<NamedTensor> snapshot(const std::vector<NamedTensor>& params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back({p.name, p.tensor.detach()});
  return out;
}

}  // namespace

TrainResult train(RafaModel& model, const Dataset& train_set, const Dataset* val_set,
                  const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ContractError("training set is empty");
  const std::size_t classes = model.config().classes;
  train_set.check_labels(classes);
  if (val_set) val_set->check_labels(classes);

  auto params = model.parameters();
  for (auto& p : params) p.tensor.zero_grad();
  SgdState state;
  TrainResult result;
  ValidationScore best{-1.0, 0.0};

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::uint64_t shuffle_stream = std::numeric_limits<std::uint64_t>::max();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    Rng shuffler(derive_seed(cfg.seed, epoch, shuffle_stream));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffler.index(i)]);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, order.size());
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      for (std::size_t pos = start; pos < stop; ++pos) {
        const std::size_t idx = order[pos];
        const Sample& sample = train_set.samples[idx];
        Rng rng(derive_seed(cfg.seed, epoch + 1, idx));
        const ForwardResult out = forward_sample(model, sample, cfg, true, &rng);
        const Tensor loss = cross_entropy(out.prediction.probs, sample.label);
        if (!std::isfinite(loss.item())) {
          throw NumericError("non-finite training loss at epoch " + std::to_string(epoch + 1) +
                             " on " + sample.path);
        }
        loss_sum += loss.item();
        if (out.prediction.predicted_class == sample.label) ++correct;
        scale(loss, inv_batch).backward();
      }
      sgd_step(params, lr, cfg.momentum, state);
    }

    EpochLog row;
    row.epoch = epoch + 1;
    row.lr = lr;
    row.train_loss = loss_sum / static_cast<double>(train_set.size());
    row.train_top1 = static_cast<double>(correct) / static_cast<double>(train_set.size());
    bool improved = epoch + 1 == cfg.epochs && !val_set;
    if (val_set && !val_set->empty()) {
      // Ties on accuracy (common with small validation sets) go to the lower loss.
      const ValidationScore score = validate_epoch(model, *val_set, cfg);
      row.val_top1 = score.top1;
      row.val_loss = score.loss;
      improved = score.top1 > best.top1 || (score.top1 == best.top1 && score.loss < best.loss);
      if (improved) best = score;
    }
    if (improved) {
      result.best = snapshot(params);
      result.best_epoch = epoch + 1;
    }
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  if (result.best.empty()) {
    result.best = snapshot(params);
    result.best_epoch = cfg.epochs;
  }
  return result;
}

Metrics evaluate(const RafaModel& model, const Dataset& data, const TrainConfig& cfg,
                 std::size_t topk) {
  if (data.empty()) throw ContractError("evaluation set is empty");
  const std::size_t classes = model.config().classes;
  data.check_labels(classes);
  NoGradGuard no_grad;
  std::vector<std::vector<double>> scores;
  std::vector<std::size_t> labels;
  scores.reserve(data.size());
  for (const auto& sample : data.samples) {
    const ForwardResult out = forward_sample(model, sample, cfg, false, nullptr);
    auto p = out.prediction.probs.data();
    scores.emplace_back(p.begin(), p.end());
    labels.push_back(sample.label);
  }
  return compute_metrics(scores, labels, classes, topk);
}

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write training log " + path.string());
  out << "epoch,lr,train_loss,train_top1,val_top1\n";
  out << std::setprecision(17);
  for (const auto& row : log) {
    out << row.epoch << ',' << row.lr << ',' << row.train_loss << ',' << row.train_top1 << ',';
    if (row.val_top1) out << *row.val_top1;
    out << '\n';
  }
}

}  // namespace rafa
