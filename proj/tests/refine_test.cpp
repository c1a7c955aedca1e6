#include <gtest/gtest.h>

#include <cstring>

#include "rafa/error.hpp"
#include "rafa/gradcheck.hpp"
#include "rafa/model.hpp"
#include "rafa/refine.hpp"
#include "support.hpp"

namespace rafa {
namespace {

using test::random_tensor;

RefineParams make_params(std::size_t c, std::size_t k, Rng& rng, bool second_norm = true) {
  return RefineParams::init(c, k, 0.25, second_norm, rng);
}

TEST(AttentionWeights, SingleRow) {
  Rng rng(1);
  const RefineParams p = make_params(3, 2, rng);
  const Tensor t = random_tensor({1, 3}, rng);
  const WeightedContext w = attention_weights(t, p);
  EXPECT_DOUBLE_EQ(w.weights.item(), 1.0);
  for (std::size_t a = 0; a < 3; ++a) EXPECT_DOUBLE_EQ(w.context[a], t[a]);
}

TEST(AttentionWeights, ZeroWeightsAverageRows) {
  Rng rng(2);
  RefineParams p = make_params(4, 2, rng);
  p.w_phi = Tensor::zeros({4}, true);
  const Tensor t = random_tensor({9, 4}, rng);
  const WeightedContext w = attention_weights(t, p);
  const Tensor avg = mean_rows(t);
  for (double v : w.weights.data()) EXPECT_NEAR(v, 1.0 / 9.0, 1e-15);
  for (std::size_t a = 0; a < 4; ++a) EXPECT_NEAR(w.context[a], avg[a], 1e-14);
}

TEST(AttentionWeights, NormalizedOverRandomDraws) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t r = 1 + rng.index(16), c = 1 + rng.index(8);
    RefineParams p = make_params(c, 2, rng);
    p.w_phi = random_tensor({c}, rng, -5, 5);
    const WeightedContext w = attention_weights(random_tensor({r, c}, rng, -5, 5), p);
    double s = 0.0;
    for (double v : w.weights.data()) {
      ASSERT_GT(v, 0.0);
      s += v;
    }
    ASSERT_NEAR(s, 1.0, 1e-12);
  }
  RefineParams p = make_params(3, 2, rng);
  EXPECT_THROW(attention_weights(Tensor::zeros({4, 5}), p), DimensionError);
}

TEST(ContextGate, Examples) {
  Rng rng(4);
  const Tensor x = random_tensor({5}, rng);
  const Tensor closed = context_gate(x, Tensor::filled({5}, -800.0));
  const Tensor half = context_gate(x, Tensor::zeros({5}));
  const Tensor zero = context_gate(Tensor::zeros({5}), random_tensor({5}, rng, -9, 9));
  for (std::size_t a = 0; a < 5; ++a) {
    EXPECT_DOUBLE_EQ(closed[a], x[a]);
    EXPECT_DOUBLE_EQ(half[a], 1.5 * x[a]);
    EXPECT_EQ(zero[a], 0.0);
  }
  EXPECT_THROW(context_gate(Tensor::zeros({5}), Tensor::zeros({4})), DimensionError);
}

TEST(ContextGate, MonotoneInGate) {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t c = 1 + rng.index(6), k = rng.index(c);
    Tensor x = random_tensor({c}, rng);
    x.mutable_data()[k] = rng.uniform(0.01, 3.0);
    const Tensor gate = random_tensor({c}, rng, -5, 5);
    std::vector<double> raised(gate.data().begin(), gate.data().end());
    raised[k] += rng.uniform(0.0, 4.0);
    const double before = context_gate(x, gate)[k];
    const double after = context_gate(x, Tensor::from({c}, raised))[k];
    ASSERT_GE(after, before);
  }
}

TEST(GaussianDropout, NoiseStd) {
  EXPECT_DOUBLE_EQ(gaussian_dropout_std(0.5), 1.0);
  EXPECT_NEAR(gaussian_dropout_std(0.25), 0.577350, 1e-6);
  EXPECT_EQ(gaussian_dropout_std(0.0), 0.0);
  EXPECT_THROW(gaussian_dropout_std(1.0), ConfigError);
  EXPECT_THROW(gaussian_dropout_std(-0.1), ConfigError);
}

TEST(GaussianDropout, SampleStdMatches) {
  for (double q : {0.25, 0.5}) {
    Rng rng(6);
    const Tensor ones = Tensor::filled({1000000}, 1.0);
    const Tensor noise = gaussian_dropout(ones, q, true, &rng);
    EXPECT_NEAR(test::mean_of(noise.data()), 1.0, 0.01);
    EXPECT_NEAR(test::population_std(noise.data()), std::sqrt(q / (1 - q)), 0.01) << q;
  }
}

TEST(GaussianDropout, InferenceIsPassthrough) {
  Rng rng(7);
  const Tensor x = random_tensor({64}, rng);
  const Tensor y = gaussian_dropout(x, 0.25, false, nullptr);
  EXPECT_EQ(0, std::memcmp(x.data().data(), y.data().data(), 64 * sizeof(double)));
  EXPECT_THROW(gaussian_dropout(x, 0.25, true, nullptr), ContractError);
}

TEST(Classify, ZeroClassifierIsUniform) {
  Rng rng(8);
  RefineParams p = make_params(4, 5, rng);
  p.classifier_w = Tensor::zeros({4, 5}, true);
  const Prediction pred = classify(random_tensor({4}, rng), p, false, nullptr);
  for (double v : pred.probs.data()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(Classify, ArgmaxOfLargeLogit) {
  Rng rng(9);
  RefineParams p = make_params(3, 2, rng);
  p.classifier_w = Tensor::zeros({3, 2}, true);
  p.classifier_b = Tensor::from({2}, {50.0, -50.0}, true);
  EXPECT_EQ(classify(random_tensor({3}, rng), p, false, nullptr).predicted_class, 0u);
}

TEST(Classify, ProbabilitiesSumToOne) {
  Rng rng(10);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t c = 2 + rng.index(8), k = 1 + rng.index(8);
    const RefineParams p = make_params(c, k, rng, trial % 2 == 0);
    const Prediction pred = classify(random_tensor({c}, rng, -10, 10), p, trial % 3 == 0, &rng);
    double s = 0.0;
    for (double v : pred.probs.data()) {
      ASSERT_GT(v, 0.0);
      s += v;
    }
    ASSERT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Classify, ShiftedLogitsKeepArgmax) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    RefineParams p = make_params(4, 6, rng);
    const Tensor x = random_tensor({4}, rng);
    const std::size_t before = classify(x, p, false, nullptr).predicted_class;
    const double shift = rng.uniform(-100, 100);
    for (double& v : p.classifier_b.mutable_data()) v += shift;
    ASSERT_EQ(classify(x, p, false, nullptr).predicted_class, before);
  }
}

TEST(Classify, SecondNormIsOptional) {
  Rng rng(12);
  const RefineParams one = make_params(4, 3, rng, false);
  const RefineParams two = make_params(4, 3, rng, true);
  EXPECT_FALSE(one.has_second_norm());
  EXPECT_TRUE(two.has_second_norm());
  EXPECT_EQ(one.named_classifier().size() + 2, two.named_classifier().size());
}

TEST(CrossEntropy, Examples) {
  EXPECT_NEAR(cross_entropy(Tensor::filled({4}, 0.25), 2).item(), 1.386294, 1e-6);
  EXPECT_EQ(cross_entropy(Tensor::from({3}, {0, 1, 0}), 1).item(), 0.0);
  EXPECT_NEAR(cross_entropy(Tensor::from({2}, {0, 1}), 0).item(), -std::log(1e-12), 1e-9);
  EXPECT_THROW(cross_entropy(Tensor::filled({4}, 0.25), 4), ContractError);
}

TEST(CrossEntropy, LogitGradientIsProbsMinusOneHot) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor z = random_tensor({5}, rng, -3, 3, true);
    const std::size_t label = rng.index(5);
    const Tensor probs = softmax(z);
    cross_entropy(probs, label).backward();
    const auto numeric =
        test::numeric_gradient([&] { return cross_entropy(softmax(z), label).item(); }, z);
    for (std::size_t i = 0; i < 5; ++i) {
      const double expected = probs[i] - (i == label ? 1.0 : 0.0);
      ASSERT_NEAR(z.grad()[i], expected, 1e-12);
      ASSERT_LE(test::relative_error(numeric[i], expected), 1e-6);
    }
  }
}

ModelConfig head_config(Variant v, bool second_norm) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.second_norm = second_norm;
  cfg.backbone.kind = BackboneKind::file_features;
  cfg.backbone.feature_channels = 16;
  cfg.backbone.input_h = cfg.backbone.input_w = 8;
  return cfg;
}

TEST(FullModel, GradientCheckEveryGroupInInferenceMode) {
  for (bool second : {true, false}) {
    const RafaModel model = RafaModel::create(head_config(Variant::full, second), 3);
    Rng rng(14);
    const FeatureGrid grid(random_tensor({8, 8, 16}, rng, 0, 1));
    auto params = model.parameters();
    auto report = gradient_check(
        [&] { return cross_entropy(model.forward_grid(grid, false, nullptr).prediction.probs, 1); },
        params);
    for (const auto& e : report.entries) EXPECT_LE(e.max_relative_error, 1e-4) << e.name;
    EXPECT_TRUE(report.passed());
  }
}

TEST(FullModel, FrozenDropoutNoiseGradientCheck) {
  const RafaModel model = RafaModel::create(head_config(Variant::full, true), 4);
  Rng data(15);
  const FeatureGrid grid(random_tensor({8, 8, 16}, data, 0, 1));
  auto params = model.parameters();
  auto report = gradient_check(
      [&] {
        Rng noise(99);
        return cross_entropy(model.forward_grid(grid, true, &noise).prediction.probs, 2);
      },
      params);
  EXPECT_TRUE(report.passed()) << report.max_relative_error();
}

TEST(FullModel, InferenceIsDeterministic) {
  const RafaModel model = RafaModel::create(head_config(Variant::full, true), 5);
  Rng rng(16);
  const FeatureGrid grid(random_tensor({8, 8, 16}, rng));
  const Tensor a = model.forward_grid(grid, false, nullptr).prediction.probs;
  const Tensor b = model.forward_grid(grid, false, &rng).prediction.probs;
  EXPECT_EQ(0, std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)));
}

TEST(FullModel, ContextWeightsOnlyForFull) {
  Rng rng(17);
  const FeatureGrid grid(random_tensor({8, 8, 16}, rng));
  for (Variant v : {Variant::baseline, Variant::roi_attention, Variant::roi_ffn, Variant::full}) {
    const ForwardResult r = RafaModel::create(head_config(v, true), 6).forward_grid(grid, false, nullptr);
    EXPECT_EQ(r.region_weights.defined(), v != Variant::baseline) << to_string(v);
    EXPECT_EQ(r.context_weights.defined(), v == Variant::full) << to_string(v);
    if (v == Variant::full) EXPECT_EQ(r.context_weights.numel(), 9u);
  }
}

}  // namespace
}  // namespace rafa
