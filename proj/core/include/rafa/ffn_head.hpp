#pragma once

#include <cstddef>
#include <vector>

#include "rafa/ops.hpp"
#include "rafa/region_attention.hpp"
#include "rafa/rng.hpp"
#include "rafa/tensor.hpp"

namespace rafa {

struct PyramidConfig {
  std::vector<std::size_t> levels = {1, 2, 3};
  PoolMode mode = PoolMode::mean;

  /// Sum of level^2.
  std::size_t bin_count() const;
  void validate(std::size_t grid_side) const;
};

/// Depthwise [3 x c], pointwise [c x c], bias [c].
struct SepConvParams {
  Tensor depthwise;
  Tensor pointwise;
  Tensor bias;

  static SepConvParams init(std::size_t channels, Rng& rng);
  Tensor apply(const Tensor& x) const {
    return conv1d_separable(x, depthwise, pointwise, bias);
  }
};

struct FfnParams {
  SepConvParams path_a;  // after the spatial pyramid
  SepConvParams path_b;  // after local average pooling
  Tensor fuse_gain;      // [c]
  Tensor fuse_bias;      // [c]

  static FfnParams init(std::size_t channels, Rng& rng);
  std::vector<NamedTensor> named() const;
};

/// Member regions of every pyramid bin: level-major, row-major within a
/// level. Cell k of an n-way split spans [floor(G k / n), ceil(G (k+1) / n)),
/// so neighbouring cells overlap when n does not divide G.
std::vector<std::vector<std::size_t>> pyramid_bins(std::size_t grid_side,
                                                   const PyramidConfig& cfg);

/// [B x c] bins; B depends only on the levels.
Tensor spatial_pyramid_pool(const RegionSequence& regions, const PyramidConfig& cfg);

/// Pyramid pool -> separable conv over the B bins -> mean over bins: [c].
Tensor path_a(const RegionSequence& regions, const PyramidConfig& cfg, const FfnParams& params);

struct PathBResult {
  Tensor sequence;  // T, [R x c]
  Tensor summary;   // mean of T over positions, [c]
};

/// Window-3 same-padded average pool along the region axis -> separable conv.
PathBResult path_b(const RegionSequence& regions, const FfnParams& params);

/// LayerNorm(s_hat + t_hat) with the fusion gain/bias.
Tensor fuse_paths(const Tensor& s_hat, const Tensor& t_hat, const FfnParams& params);

}  // namespace rafa
