#include <gtest/gtest.h>

#include <cstring>
#include <limits>
#include <sstream>

#include "rafa/checkpoint.hpp"
#include "rafa/error.hpp"
#include "rafa/gradcheck.hpp"
#include "rafa/ops.hpp"
#include "support.hpp"

namespace rafa {
namespace {

using test::random_tensor;

void expect_values(const Tensor& t, std::vector<double> expected, double tol = 1e-12) {
  ASSERT_EQ(t.numel(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(t[i], expected[i], tol) << i;
}

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_THROW(Tensor::from({2, 3}, {1, 2}), DimensionError);
  EXPECT_THROW(Tensor::zeros({2, 0}), DimensionError);
  EXPECT_THROW(t.dim(2), DimensionError);
  EXPECT_THROW(t.item(), ContractError);
}

TEST(Matmul, IdentityAndSelector) {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  expect_values(matmul(eye, m), {1, 2, 3, 4});
  expect_values(matmul(Tensor::from({1, 2}, {1, 0}), Tensor::from({2, 1}, {5, 7})), {5});
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[4x2]"), std::string::npos);
  }
}

TEST(Matmul, SumGradientIsRowSumsOfB) {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng, -1, 1, true);
  Tensor b = random_tensor({4, 2}, rng);
  sum(matmul(a, b)).backward();
  // d sum(AB) / dA_ik = sum_j B_kj, the same for every row i.
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_NEAR(a.grad()[i * 4 + k], b[k * 2] + b[k * 2 + 1], 1e-12);
    }
  }
  auto numeric = test::numeric_gradient([&] { return sum(matmul(a, b)).item(); }, a);
  EXPECT_LE(test::max_gradient_error(numeric, a), 1e-6);
}

TEST(Elementwise, KnownValues) {
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0)).item(), 0.5);
  EXPECT_DOUBLE_EQ(tanh(Tensor::scalar(0)).item(), 0.0);
  EXPECT_DOUBLE_EQ(elementwise(ElementwiseOp::sigmoid, Tensor::scalar(0)).item(), 0.5);
  expect_values(elementwise(ElementwiseOp::add, Tensor::from({2}, {1, 2}), Tensor::from({2}, {3, 4})),
                {4, 6});
  expect_values(elementwise(ElementwiseOp::mul, Tensor::from({2}, {1, 2}), Tensor::from({2}, {3, 4})),
                {3, 8});
}

TEST(Elementwise, ReluValueAndGradient) {
  Tensor neg = Tensor::scalar(-3.2, true);
  Tensor pos = Tensor::scalar(3.2, true);
  Tensor rn = relu(neg), rp = relu(pos);
  EXPECT_EQ(rn.item(), 0.0);
  EXPECT_EQ(rp.item(), 3.2);
  rn.backward();
  rp.backward();
  EXPECT_EQ(neg.grad()[0], 0.0);
  EXPECT_EQ(pos.grad()[0], 1.0);
}

TEST(Elementwise, BroadcastOnlyTrailingVector) {
  Tensor m = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  expect_values(add(m, Tensor::from({3}, {10, 20, 30})), {11, 22, 33, 14, 25, 36});
  EXPECT_THROW(add(m, Tensor::zeros({2})), DimensionError);
  EXPECT_THROW(mul(m, Tensor::zeros({3, 2})), DimensionError);
}

TEST(Softmax, Examples) {
  expect_values(softmax(Tensor::zeros({3})), {1.0 / 3, 1.0 / 3, 1.0 / 3});
  Tensor big = softmax(Tensor::from({2}, {1000, 0}));
  EXPECT_TRUE(std::isfinite(big[0]) && std::isfinite(big[1]));
  EXPECT_DOUBLE_EQ(big[0], 1.0);
  EXPECT_LT(big[1], 1e-300);
}

TEST(Softmax, SlicesSumToOne) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 1 + rng.index(6), cols = 1 + rng.index(12);
    Tensor s = softmax(random_tensor({rows, cols}, rng, -30, 30));
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        EXPECT_GT(s[r * cols + c], 0.0);
        total += s[r * cols + c];
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(SeparableConv, DeltaKernelIsRelu) {
  Rng rng(5);
  Tensor x = random_tensor({6, 3}, rng);
  Tensor dw = Tensor::from({3, 3}, {0, 0, 0, 1, 1, 1, 0, 0, 0});
  Tensor pw = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor y = conv1d_separable(x, dw, pw, Tensor::zeros({3}));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(y[i], std::max(0.0, x[i]));
}

TEST(SeparableConv, ZeroPaddingAtBoundaries) {
  const double r[2] = {0.7, -0.4};
  Tensor x = Tensor::from({5, 2}, {r[0], r[1], r[0], r[1], r[0], r[1], r[0], r[1], r[0], r[1]});
  Tensor dw = Tensor::filled({3, 2}, 1.0);
  Tensor pw = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor y = conv1d_separable(x, dw, pw, Tensor::zeros({2}));
  for (std::size_t pos = 0; pos < 5; ++pos) {
    const double taps = (pos == 0 || pos == 4) ? 2.0 : 3.0;
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_NEAR(y[pos * 2 + c], std::max(0.0, taps * r[c]), 1e-15);
    }
  }
}

TEST(SeparableConv, ChannelMismatch) {
  EXPECT_THROW(conv1d_separable(Tensor::zeros({4, 3}), Tensor::zeros({3, 2}), Tensor::zeros({3, 3}),
                                Tensor::zeros({3})),
               DimensionError);
}

TEST(AvgPool1d, Examples) {
  expect_values(avgpool1d(Tensor::from({2, 2}, {1, 3, 5, 7}), 2, 2, Padding::none), {3, 5});
  expect_values(avgpool1d(Tensor::filled({5, 2}, 4.25), 3, 1, Padding::same),
                std::vector<double>(10, 4.25));
  expect_values(avgpool1d(Tensor::from({4, 1}, {1, 2, 3, 4}), 3, 1, Padding::same),
                {1.5, 2, 3, 3.5});
  EXPECT_THROW(avgpool1d(Tensor::zeros({2, 1}), 3, 1, Padding::none), DimensionError);
}

TEST(Backward, SquareAndFanOut) {
  Tensor x = Tensor::from({1}, {3}, true);
  sum(mul(x, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);

  Tensor y = Tensor::from({1}, {1.5}, true);
  sum(add(y, y)).backward();
  EXPECT_DOUBLE_EQ(y.grad()[0], 2.0);
}

TEST(Backward, NonScalarIsContractError) {
  Tensor x = Tensor::zeros({2}, true);
  EXPECT_THROW(scale(x, 2.0).backward(), ContractError);
}

TEST(Backward, SharedSubexpressionMatchesUnrolledCopy) {
  Rng rng(7);
  Tensor x = random_tensor({4}, rng, -1, 1, true);
  Tensor x2 = Tensor::from({4}, std::vector<double>(x.data().begin(), x.data().end()), true);
  // shared: h = tanh(x) used three times
  Tensor h = tanh(x);
  sum(add(mul(h, h), sigmoid(h))).backward();
  // unrolled: three independent tanh nodes
  sum(add(mul(tanh(x2), tanh(x2)), sigmoid(tanh(x2)))).backward();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(x.grad()[i], x2.grad()[i], 1e-15);
}

TEST(Backward, GradientsAccumulateAcrossCalls) {
  Tensor x = Tensor::from({1}, {2}, true);
  sum(mul(x, x)).backward();
  sum(mul(x, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Backward, NoGradGuardStopsRecording) {
  Tensor x = Tensor::from({1}, {2}, true);
  NoGradGuard guard;
  EXPECT_FALSE(mul(x, x).requires_grad());
}

TEST(GradientCheck, SigmoidAtZero) {
  std::vector<NamedTensor> params{{"x", Tensor::zeros({5})}};
  GradCheckOptions opts;
  opts.tolerance = 1e-8;
  auto report = gradient_check([&] { return sum(sigmoid(params[0].tensor)); }, params, opts);
  EXPECT_TRUE(report.passed());
  for (double g : params[0].tensor.grad()) EXPECT_NEAR(g, 0.25, 1e-15);
  EXPECT_LE(report.max_relative_error(), 1e-8);
}

TEST(GradientCheck, LinearIsExactUpToRoundoff) {
  Rng rng(9);
  Tensor w = random_tensor({6}, rng);
  std::vector<NamedTensor> params{{"x", random_tensor({6}, rng)}};
  auto report = gradient_check([&] { return sum(mul(params[0].tensor, w)); }, params);
  // Truncation error is zero; what remains is roundoff of order 1e-16 * |f| / eps.
  EXPECT_LE(report.max_relative_error(), 1e-7);
}

TEST(GradientCheck, ReportsFailures) {
  // log near the clamp: the analytic gradient is 0 below the floor while a
  // difference straddling it is not.
  std::vector<NamedTensor> params{{"x", Tensor::from({1}, {1e-7})}};
  GradCheckOptions opts;
  opts.tolerance = 1e-12;
  auto report = gradient_check([&] { return sum(log_clamped(params[0].tensor, 1e-7)); }, params,
                               opts);
  EXPECT_FALSE(report.passed());
  ASSERT_EQ(report.failing().size(), 1u);
  EXPECT_EQ(report.failing()[0], "x");
}

TEST(GradientCheck, NonFiniteNamesTensor) {
  std::vector<NamedTensor> params{{"weights", Tensor::from({1}, {800.0})}};
  try {
    gradient_check([&] { return sum(exp(params[0].tensor)); }, params);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("weights"), std::string::npos);
  }
}

// Every differentiable primitive against independent central differences on
// 100 random instances each.
struct Primitive {
  const char* name;
  std::function<std::vector<Tensor>(Rng&)> inputs;
  std::function<Tensor(const std::vector<Tensor>&)> apply;
};

Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor t = random_tensor(std::move(shape), rng, 0.05, 1.0);
  for (double& v : t.mutable_data()) {
    if (rng.uniform() < 0.5) v = -v;
  }
  return t;
}

std::vector<Primitive> primitives() {
  auto two = [](Shape a, Shape b) {
    return [a, b](Rng& r) { return std::vector<Tensor>{random_tensor(a, r), random_tensor(b, r)}; };
  };
  auto one = [](Shape a, double lo = -1, double hi = 1) {
    return [a, lo, hi](Rng& r) { return std::vector<Tensor>{random_tensor(a, r, lo, hi)}; };
  };
  using V = const std::vector<Tensor>&;
  return {
      {"add", two({3, 4}, {3, 4}), [](V t) { return add(t[0], t[1]); }},
      {"add_broadcast", two({3, 4}, {4}), [](V t) { return add(t[0], t[1]); }},
      {"sub", two({3, 4}, {4}), [](V t) { return sub(t[0], t[1]); }},
      {"mul", two({2, 5}, {2, 5}), [](V t) { return mul(t[0], t[1]); }},
      {"mul_broadcast", two({2, 5}, {5}), [](V t) { return mul(t[0], t[1]); }},
      {"scale", one({7}), [](V t) { return scale(t[0], -1.7); }},
      {"add_scalar", one({7}), [](V t) { return add_scalar(t[0], 0.3); }},
      {"tanh", one({8}, -2, 2), [](V t) { return tanh(t[0]); }},
      {"sigmoid", one({8}, -3, 3), [](V t) { return sigmoid(t[0]); }},
      {"relu", [](Rng& r) { return std::vector<Tensor>{away_from_zero({9}, r)}; },
       [](V t) { return relu(t[0]); }},
      {"exp", one({6}, -2, 2), [](V t) { return exp(t[0]); }},
      {"log_clamped", one({6}, 0.1, 2), [](V t) { return log_clamped(t[0], 1e-12); }},
      {"matmul", two({3, 4}, {4, 2}), [](V t) { return matmul(t[0], t[1]); }},
      {"transpose", one({3, 5}), [](V t) { return transpose(t[0]); }},
      {"reshape", one({2, 6}), [](V t) { return reshape(t[0], {3, 4}); }},
      {"softmax", one({3, 5}, -3, 3), [](V t) { return softmax(t[0]); }},
      {"sum", one({4, 2}), [](V t) { return sum(t[0]); }},
      {"mean", one({4, 2}), [](V t) { return mean(t[0]); }},
      {"mean_rows", one({5, 3}), [](V t) { return mean_rows(t[0]); }},
      {"pick", one({3, 3}), [](V t) { return pick(t[0], 4); }},
      {"gather_rows", one({4, 3}),
       [](V t) {
         const std::vector<std::size_t> idx{0, 2, 2, 3, 1, 2};
         return gather_rows(t[0], idx);
       }},
      {"pool_rows_mean", one({6, 2}),
       [](V t) { return pool_rows(t[0], {{0, 1, 2}, {2, 3}, {5}, {0, 4, 5}}, PoolMode::mean); }},
      {"pool_rows_max", one({6, 2}),
       [](V t) { return pool_rows(t[0], {{0, 1, 2}, {2, 3}, {5}, {0, 4, 5}}, PoolMode::max); }},
      {"layer_norm",
       [](Rng& r) {
         return std::vector<Tensor>{random_tensor({3, 6}, r, -2, 2), random_tensor({6}, r),
                                    random_tensor({6}, r)};
       },
       [](V t) { return layer_norm(t[0], t[1], t[2]); }},
      {"depthwise_conv1d", two({5, 3}, {3, 3}), [](V t) { return depthwise_conv1d(t[0], t[1]); }},
      {"conv1d_separable",
       [](Rng& r) {
         return std::vector<Tensor>{random_tensor({6, 3}, r), random_tensor({3, 3}, r),
                                    random_tensor({3, 3}, r), random_tensor({3}, r)};
       },
       [](V t) { return conv1d_separable(t[0], t[1], t[2], t[3]); }},
      {"avgpool1d_same", one({5, 2}), [](V t) { return avgpool1d(t[0], 3, 1, Padding::same); }},
      {"avgpool1d_none", one({6, 2}), [](V t) { return avgpool1d(t[0], 2, 2, Padding::none); }},
      {"conv2d_stride2",
       [](Rng& r) {
         return std::vector<Tensor>{random_tensor({5, 5, 2}, r), random_tensor({3, 3, 2, 3}, r),
                                    random_tensor({3}, r)};
       },
       [](V t) { return conv2d(t[0], t[1], t[2], 2, 1); }},
      {"conv2d_valid",
       [](Rng& r) {
         return std::vector<Tensor>{random_tensor({4, 5, 2}, r), random_tensor({3, 3, 2, 2}, r),
                                    random_tensor({2}, r)};
       },
       [](V t) { return conv2d(t[0], t[1], t[2], 1, 0); }},
      {"bilinear_resize", one({3, 3, 2}), [](V t) { return bilinear_resize(t[0], 5, 7); }},
  };
}

class PrimitiveGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
  const Primitive prim = primitives()[GetParam()];
  SCOPED_TRACE(prim.name);
  Rng rng(1000 + GetParam());
  double worst = 0.0;
  for (int instance = 0; instance < 100; ++instance) {
    std::vector<Tensor> inputs = prim.inputs(rng);
    for (auto& t : inputs) t.set_requires_grad(true);
    // Random output weights make every output element matter.
    const Tensor probe_shape = prim.apply(inputs);
    Tensor weights = random_tensor(probe_shape.shape(), rng);
    auto loss = [&] { return sum(mul(prim.apply(inputs), weights)); };
    loss().backward();
    for (auto& x : inputs) {
      std::vector<double> numeric;
      {
        NoGradGuard guard;
        numeric = test::numeric_gradient([&] { return loss().item(); }, x);
      }
      worst = std::max(worst, test::max_gradient_error(numeric, x));
    }
  }
  EXPECT_LE(worst, 1e-5);
}

INSTANTIATE_TEST_SUITE_P(AllOps, PrimitiveGradient,
                         ::testing::Range<std::size_t>(0, primitives().size()),
                         [](const auto& info) { return std::string(primitives()[info.param].name); });

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    differs |= x != c.uniform();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, ReferenceDraws) {
  // mt19937_64 is pinned by the standard: the 10000th output for the
  // default seed 5489 is 9981545732273789042.
  Rng rng(5489);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next_u64();
  EXPECT_EQ(v, 9981545732273789042ULL);
  Rng u(5489);
  EXPECT_EQ(u.uniform(), static_cast<double>(14514284786278117030ULL >> 11) * 0x1.0p-53);
}

TEST(Rng, DistributionMoments) {
  Rng rng(8);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.01);
}

TEST(Rng, IndexCoversRangeUniformly) {
  Rng rng(12);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.index(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
  EXPECT_THROW(rng.index(0), ContractError);
}

TEST(Rng, DerivedSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t e = 0; e < 20; ++e) {
    for (std::uint64_t i = 0; i < 50; ++i) seen.insert(derive_seed(3, e, i));
  }
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_NE(derive_seed(3, 0, 0), derive_seed(4, 0, 0));
}

TEST(Rng, FixedSeedGivesBitIdenticalOps) {
  auto run = [] {
    Rng rng(77);
    Tensor a = random_tensor({4, 4}, rng);
    return softmax(matmul(a, transpose(a)));
  };
  Tensor x = run(), y = run();
  EXPECT_EQ(0, std::memcmp(x.data().data(), y.data().data(), x.numel() * sizeof(double)));
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  Rng rng(21);
  std::vector<NamedTensor> in{{"a", random_tensor({2, 3}, rng)},
                              {"layer.weight", random_tensor({4}, rng)},
                              {"cube", random_tensor({2, 2, 2}, rng)}};
  in[0].tensor.mutable_data()[0] = -0.0;
  in[0].tensor.mutable_data()[1] = std::numeric_limits<double>::denorm_min();
  std::stringstream buf;
  write_tensors(buf, in);
  auto out = read_tensors(buf);
  ASSERT_EQ(out.size(), in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    EXPECT_EQ(out[i].name, in[i].name);
    EXPECT_EQ(out[i].tensor.shape(), in[i].tensor.shape());
    EXPECT_EQ(0, std::memcmp(out[i].tensor.data().data(), in[i].tensor.data().data(),
                             in[i].tensor.numel() * sizeof(double)));
  }
}

TEST(Checkpoint, LittleEndianLayout) {
  std::stringstream buf;
  std::vector<NamedTensor> in{{"w", Tensor::from({1}, {1.0})}};
  write_tensors(buf, in);
  const std::string bytes = buf.str();
  const std::string expected = std::string("RAFA1") + std::string("\x01\x00\x00\x00", 4) +
                               std::string("\x01\x00\x00\x00", 4) + "w" +
                               std::string("\x01\x00\x00\x00", 4) +
                               std::string("\x01\x00\x00\x00", 4) +
                               std::string("\x00\x00\x00\x00\x00\x00\xf0\x3f", 8);
  EXPECT_EQ(bytes, expected);
}

TEST(Checkpoint, RejectsBadMagicAndTruncation) {
  std::stringstream bad("RAFA2\x01\x00\x00\x00");
  EXPECT_THROW(read_tensors(bad), FormatError);

  std::stringstream buf;
  std::vector<NamedTensor> in{{"w", Tensor::from({3}, {1, 2, 3})}};
  write_tensors(buf, in);
  const std::string full = buf.str();
  for (std::size_t cut : {std::size_t{3}, std::size_t{7}, std::size_t{14}, full.size() - 1}) {
    std::stringstream truncated(full.substr(0, cut));
    EXPECT_THROW(read_tensors(truncated), FormatError) << cut;
  }
}

TEST(Checkpoint, RejectsAbsurdHeader) {
  // rank 200
  std::stringstream buf(std::string("RAFA1") + std::string("\x01\x00\x00\x00", 4) +
                        std::string("\x01\x00\x00\x00", 4) + "w" +
                        std::string("\xc8\x00\x00\x00", 4));
  EXPECT_THROW(read_tensors(buf), FormatError);
}

}  // namespace
}  // namespace rafa
