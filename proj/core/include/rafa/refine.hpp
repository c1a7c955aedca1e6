#pragma once

#include <cstddef>
#include <vector>

#include "rafa/rng.hpp"
#include "rafa/tensor.hpp"

namespace rafa {

inline constexpr double kProbabilityFloor = 1e-12;

struct RefineParams {
  Tensor w_phi;         // [c]
  Tensor b_phi;         // [1]
  Tensor final_gain;    // [c]
  Tensor final_bias;    // [c]
  Tensor classifier_w;  // [c x K]
  Tensor classifier_b;  // [K]
  // Optional second normalization right before the classifier; undefined
  // unless enabled at init.
  Tensor extra_gain;
  Tensor extra_bias;
  double dropout = 0.25;

  static RefineParams init(std::size_t channels, std::size_t classes, double dropout,
                           bool second_norm, Rng& rng);
  bool has_second_norm() const { return extra_gain.defined(); }
  std::size_t classes() const { return classifier_w.dim(1); }
  std::vector<NamedTensor> named_weighting() const;
  std::vector<NamedTensor> named_classifier() const;
};

struct WeightedContext {
  Tensor context;  // sum_i phi_i T_i, [c]
  Tensor weights;  // phi, [R]
};

/// phi = softmax_i(w_phi . T_i + b_phi); context = sum_i phi_i T_i.
WeightedContext attention_weights(const Tensor& sequence, const RefineParams& params);

/// x + x * sigmoid(gate).
Tensor context_gate(const Tensor& x, const Tensor& gate);

/// Noise standard deviation sqrt(q / (1 - q)); ConfigError unless 0 <= q < 1.
double gaussian_dropout_std(double q);

/// Training: x * n with n ~ Normal(1, sqrt(q / (1 - q))) per element.
/// Inference: x unchanged (same tensor).
Tensor gaussian_dropout(const Tensor& x, double q, bool training, Rng* rng);

struct Prediction {
  Tensor logits;  // [K]
  Tensor probs;   // [K]
  std::size_t predicted_class = 0;
};

/// dropout -> LayerNorm(final) [-> LayerNorm(extra)] -> affine c->K -> softmax.
Prediction classify(const Tensor& features, const RefineParams& params, bool training,
                    Rng* rng);

/// -log(max(probs[true_class], 1e-12)) as a [1] tensor.
Tensor cross_entropy(const Tensor& probs, std::size_t true_class);

}  // namespace rafa
