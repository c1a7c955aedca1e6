#include "rafa/region_attention.hpp"

#include <cmath>

#include "rafa/error.hpp"

namespace rafa {

RegionSequence::RegionSequence(Tensor descriptors, std::size_t grid_side)
    : descriptors_(std::move(descriptors)), grid_side_(grid_side) {
  if (descriptors_.rank() != 2 || grid_side_ == 0 ||
      descriptors_.dim(0) != grid_side_ * grid_side_) {
    throw DimensionError("region descriptors " + descriptors_.shape_str() +
                         " do not form a square grid of side " + std::to_string(grid_side_));
  }
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

void expect_shape(const Tensor& t, const Shape& shape, const char* name) {
  if (!t.defined() || t.shape() != shape) {
    throw DimensionError(std::string("attention parameter ") + name + " has shape " +
                         (t.defined() ? t.shape_str() : "[]") + ", expected " +
                         shape_to_string(shape));
  }
}

}  // namespace

AttentionParams AttentionParams::init(std::size_t channels, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  AttentionParams p;
  p.w_g = uniform_tensor({channels, channels}, bound, rng);
  p.w_g_prime = uniform_tensor({channels, channels}, bound, rng);
  p.b_g = Tensor::zeros({channels}, true);
  p.w_h = uniform_tensor({1, channels}, bound, rng);
  p.b_h = Tensor::zeros({1}, true);
  p.w_m = uniform_tensor({1}, 1.0, rng);
  p.b_m = Tensor::zeros({1}, true);
  p.ln_gain = Tensor::filled({channels}, 1.0, true);
  p.ln_bias = Tensor::zeros({channels}, true);
  return p;
}

std::vector<NamedTensor> AttentionParams::named() const {
  return {{"attention.w_g", w_g},     {"attention.w_g_prime", w_g_prime},
          {"attention.b_g", b_g},     {"attention.w_h", w_h},
          {"attention.b_h", b_h},     {"attention.w_m", w_m},
          {"attention.b_m", b_m},     {"attention.ln_gain", ln_gain},
          {"attention.ln_bias", ln_bias}};
}

void AttentionParams::check(std::size_t c) const {
  expect_shape(w_g, {c, c}, "w_g");
  expect_shape(w_g_prime, {c, c}, "w_g_prime");
  expect_shape(b_g, {c}, "b_g");
  expect_shape(w_h, {1, c}, "w_h");
  expect_shape(b_h, {1}, "b_h");
  expect_shape(w_m, {1}, "w_m");
  expect_shape(b_m, {1}, "b_m");
  expect_shape(ln_gain, {c}, "ln_gain");
  expect_shape(ln_bias, {c}, "ln_bias");
}

RegionSequence pool_regions(const FeatureGrid& grid, std::size_t delta) {
  const std::size_t h = grid.height(), w = grid.width(), c = grid.channels();
  if (h != w) {
    throw ConfigError("region pooling needs a square grid, got " + grid.values().shape_str());
  }
  if (delta == 0 || h % delta != 0) {
    throw ConfigError("grid side " + std::to_string(h) + " not divisible by region size " +
                      std::to_string(delta));
  }
  const std::size_t side = h / delta;
  std::vector<std::vector<std::size_t>> groups;
  groups.reserve(side * side);
  for (std::size_t gr = 0; gr < side; ++gr) {
    for (std::size_t gc = 0; gc < side; ++gc) {
      std::vector<std::size_t> cells;
      cells.reserve(delta * delta);
      for (std::size_t y = gr * delta; y < (gr + 1) * delta; ++y) {
        for (std::size_t x = gc * delta; x < (gc + 1) * delta; ++x) cells.push_back(y * w + x);
      }
      groups.push_back(std::move(cells));
    }
  }
  const Tensor cells = reshape(grid.values(), {h * w, c});
  return RegionSequence(pool_rows(cells, groups, PoolMode::mean), side);
}

AttentionResult region_attention(const RegionSequence& regions, const AttentionParams& params) {
  const std::size_t r = regions.count();
  const std::size_t c = regions.channels();
  params.check(c);
  const Tensor& f = regions.descriptors();

  std::vector<std::size_t> query(r * r), context(r * r);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      query[i * r + j] = i;
      context[i * r + j] = j;
    }
  }
  const Tensor proj_query = matmul(f, transpose(params.w_g));
  const Tensor proj_context = matmul(f, transpose(params.w_g_prime));
  const Tensor g = tanh(
      add(add(gather_rows(proj_query, query), gather_rows(proj_context, context)), params.b_g));
  const Tensor h = sigmoid(add(matmul(g, transpose(params.w_h)), params.b_h));  // [R^2 x 1]
  const Tensor logits = reshape(add(mul(h, params.w_m), params.b_m), {r, r});
  const Tensor m = softmax(logits);
  const Tensor attended = matmul(m, f);
  const Tensor normalized = layer_norm(attended, params.ln_gain, params.ln_bias, kLayerNormEps);
  return {RegionSequence(normalized, regions.grid_side()), m};
}

Tensor global_region_mean(const RegionSequence& regions) {
  return mean_rows(regions.descriptors());
}

}  // namespace rafa
