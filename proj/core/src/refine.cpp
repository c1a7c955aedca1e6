#include "rafa/refine.hpp"

#include <algorithm>
#include <cmath>

#include "rafa/error.hpp"
#include "rafa/ops.hpp"
#include "rafa/region_attention.hpp"

namespace rafa {

RefineParams RefineParams::init(std::size_t channels, std::size_t classes, double dropout,
                                bool second_norm, Rng& rng) {
  gaussian_dropout_std(dropout);
  if (classes == 0) throw ConfigError("classifier needs at least one class");
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  std::vector<double> phi(channels), cls(channels * classes);
  for (double& v : phi) v = rng.uniform(-bound, bound);
  for (double& v : cls) v = rng.uniform(-bound, bound);
  RefineParams p;
  p.w_phi = Tensor::from({channels}, std::move(phi), true);
  p.b_phi = Tensor::zeros({1}, true);
  p.final_gain = Tensor::filled({channels}, 1.0, true);
  p.final_bias = Tensor::zeros({channels}, true);
  p.classifier_w = Tensor::from({channels, classes}, std::move(cls), true);
  p.classifier_b = Tensor::zeros({classes}, true);
  if (second_norm) {
    p.extra_gain = Tensor::filled({channels}, 1.0, true);
    p.extra_bias = Tensor::zeros({channels}, true);
  }
  p.dropout = dropout;
  return p;
}

std::vector<NamedTensor> RefineParams::named_weighting() const {
  return {{"refine.w_phi", w_phi}, {"refine.b_phi", b_phi}};
}

std::vector<NamedTensor> RefineParams::named_classifier() const {
  std::vector<NamedTensor> out = {{"classify.final_gain", final_gain},
                                  {"classify.final_bias", final_bias},
                                  {"classify.weight", classifier_w},
                                  {"classify.bias", classifier_b}};
  if (has_second_norm()) {
    out.push_back({"classify.extra_gain", extra_gain});
    out.push_back({"classify.extra_bias", extra_bias});
  }
  return out;
}

WeightedContext attention_weights(const Tensor& sequence, const RefineParams& params) {
  if (sequence.rank() != 2 || params.w_phi.shape() != Shape{sequence.dim(1)}) {
    throw DimensionError("attention_weights: sequence " + sequence.shape_str() +
                         " incompatible with w_phi " + params.w_phi.shape_str());
  }
  const std::size_t r = sequence.dim(0), c = sequence.dim(1);
  const Tensor scores = add(matmul(sequence, reshape(params.w_phi, {c, 1})), params.b_phi);
  const Tensor phi = softmax(reshape(scores, {1, r}));
  Tensor context = reshape(matmul(phi, sequence), {c});
  return {std::move(context), reshape(phi, {r})};
}

Tensor context_gate(const Tensor& x, const Tensor& gate) {
  if (x.shape() != gate.shape()) {
    throw DimensionError("context_gate: features " + x.shape_str() + " and gate " +
                         gate.shape_str() + " differ");
  }
  return add(x, mul(x, sigmoid(gate)));
}

double gaussian_dropout_std(double q) {
  if (!(q >= 0.0 && q < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(q));
  }
  return std::sqrt(q / (1.0 - q));
}

Tensor gaussian_dropout(const Tensor& x, double q, bool training, Rng* rng) {
  const double stddev = gaussian_dropout_std(q);
  if (!training || q == 0.0) return x;
  if (!rng) throw ContractError("gaussian_dropout: training mode needs an Rng");
  std::vector<double> noise(x.numel());
  for (double& n : noise) n = rng->normal(1.0, stddev);
  return mul(x, Tensor::from(x.shape(), std::move(noise)));
}

Prediction classify(const Tensor& features, const RefineParams& params, bool training,
                    Rng* rng) {
  const std::size_t c = params.final_gain.numel();
  if (features.shape() != Shape{c}) {
    throw DimensionError("classify: features " + features.shape_str() + " but head expects [" +
                         std::to_string(c) + "]");
  }
  Tensor h = gaussian_dropout(features, params.dropout, training, rng);
  h = layer_norm(h, params.final_gain, params.final_bias, kLayerNormEps);
  if (params.has_second_norm()) {
    h = layer_norm(h, params.extra_gain, params.extra_bias, kLayerNormEps);
  }
  const std::size_t k = params.classes();
  Prediction out;
  out.logits = reshape(add(matmul(reshape(h, {1, c}), params.classifier_w),
                           params.classifier_b),
                       {k});
  out.probs = softmax(out.logits);
  const auto p = out.probs.data();
  out.predicted_class =
      static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  return out;
}

Tensor cross_entropy(const Tensor& probs, std::size_t true_class) {
  if (probs.rank() != 1 || true_class >= probs.numel()) {
    throw ContractError("cross_entropy: class " + std::to_string(true_class) +
                        " out of range for probabilities " + probs.shape_str());
  }
  return scale(log_clamped(pick(probs, true_class), kProbabilityFloor), -1.0);
}

}  // namespace rafa
