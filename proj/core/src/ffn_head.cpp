#include "rafa/ffn_head.hpp"

#include <cmath>
#include <numeric>

#include "rafa/error.hpp"

namespace rafa {

std::size_t PyramidConfig::bin_count() const {
  return std::accumulate(levels.begin(), levels.end(), std::size_t{0},
                         [](std::size_t acc, std::size_t n) { return acc + n * n; });
}

void PyramidConfig::validate(std::size_t grid_side) const {
  if (levels.empty()) throw ConfigError("pyramid needs at least one level");
  for (std::size_t n : levels) {
    if (n == 0 || n > grid_side) {
      throw ConfigError("pyramid level " + std::to_string(n) + " outside [1, " +
                        std::to_string(grid_side) + "] for a " + std::to_string(grid_side) +
                        "x" + std::to_string(grid_side) + " region grid");
    }
  }
}

SepConvParams SepConvParams::init(std::size_t channels, Rng& rng) {
  const double dw_bound = 1.0 / std::sqrt(3.0);
  const double pw_bound = 1.0 / std::sqrt(static_cast<double>(channels));
  std::vector<double> dw(3 * channels), pw(channels * channels);
  for (double& v : dw) v = rng.uniform(-dw_bound, dw_bound);
  for (double& v : pw) v = rng.uniform(-pw_bound, pw_bound);
  return {Tensor::from({3, channels}, std::move(dw), true),
          Tensor::from({channels, channels}, std::move(pw), true),
          Tensor::zeros({channels}, true)};
}

FfnParams FfnParams::init(std::size_t channels, Rng& rng) {
  FfnParams p;
  p.path_a = SepConvParams::init(channels, rng);
  p.path_b = SepConvParams::init(channels, rng);
  p.fuse_gain = Tensor::filled({channels}, 1.0, true);
  p.fuse_bias = Tensor::zeros({channels}, true);
  return p;
}

std::vector<NamedTensor> FfnParams::named() const {
  return {{"ffn.a.depthwise", path_a.depthwise}, {"ffn.a.pointwise", path_a.pointwise},
          {"ffn.a.bias", path_a.bias},           {"ffn.b.depthwise", path_b.depthwise},
          {"ffn.b.pointwise", path_b.pointwise}, {"ffn.b.bias", path_b.bias},
          {"ffn.fuse_gain", fuse_gain},          {"ffn.fuse_bias", fuse_bias}};
}

std::vector<std::vector<std::size_t>> pyramid_bins(std::size_t grid_side,
                                                   const PyramidConfig& cfg) {
  cfg.validate(grid_side);
  const std::size_t g = grid_side;
  auto lo = [g](std::size_t k, std::size_t n) { return g * k / n; };
  auto hi = [g](std::size_t k, std::size_t n) { return (g * (k + 1) + n - 1) / n; };
  std::vector<std::vector<std::size_t>> bins;
  bins.reserve(cfg.bin_count());
  for (std::size_t n : cfg.levels) {
    for (std::size_t by = 0; by < n; ++by) {
      for (std::size_t bx = 0; bx < n; ++bx) {
        std::vector<std::size_t> members;
        for (std::size_t y = lo(by, n); y < hi(by, n); ++y) {
          for (std::size_t x = lo(bx, n); x < hi(bx, n); ++x) members.push_back(y * g + x);
        }
        bins.push_back(std::move(members));
      }
    }
  }
  return bins;
}

Tensor spatial_pyramid_pool(const RegionSequence& regions, const PyramidConfig& cfg) {
  return pool_rows(regions.descriptors(), pyramid_bins(regions.grid_side(), cfg), cfg.mode);
}

Tensor path_a(const RegionSequence& regions, const PyramidConfig& cfg, const FfnParams& params) {
  return mean_rows(params.path_a.apply(spatial_pyramid_pool(regions, cfg)));
}

PathBResult path_b(const RegionSequence& regions, const FfnParams& params) {
  const Tensor pooled = avgpool1d(regions.descriptors(), 3, 1, Padding::same);
  Tensor sequence = params.path_b.apply(pooled);
  Tensor summary = mean_rows(sequence);
  return {std::move(sequence), std::move(summary)};
}

Tensor fuse_paths(const Tensor& s_hat, const Tensor& t_hat, const FfnParams& params) {
  if (s_hat.shape() != t_hat.shape()) {
    throw DimensionError("fuse_paths: path outputs " + s_hat.shape_str() + " and " +
                         t_hat.shape_str() + " differ");
  }
  return layer_norm(add(s_hat, t_hat), params.fuse_gain, params.fuse_bias, kLayerNormEps);
}

}  // namespace rafa
