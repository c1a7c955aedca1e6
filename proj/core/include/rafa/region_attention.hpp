#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rafa/backbone.hpp"
#include "rafa/ops.hpp"
#include "rafa/rng.hpp"
#include "rafa/tensor.hpp"

namespace rafa {

inline constexpr double kLayerNormEps = 1e-5;

/// R region descriptors [R x c] laid out row-major on a G x G grid.
class RegionSequence {
 public:
  RegionSequence() = default;
  /// Throws DimensionError unless descriptors is [G*G x c].
  RegionSequence(Tensor descriptors, std::size_t grid_side);

  std::size_t count() const { return descriptors_.dim(0); }
  std::size_t channels() const { return descriptors_.dim(1); }
  std::size_t grid_side() const { return grid_side_; }
  const Tensor& descriptors() const { return descriptors_; }

  std::size_t index_of(std::size_t row, std::size_t col) const { return row * grid_side_ + col; }
  std::pair<std::size_t, std::size_t> position_of(std::size_t index) const {
    return {index / grid_side_, index % grid_side_};
  }

 private:
  Tensor descriptors_;
  std::size_t grid_side_ = 0;
};

/// Additive region attention weights plus the shared LayerNorm pair.
struct AttentionParams {
  Tensor w_g;        // [c x c], applied to the query region
  Tensor w_g_prime;  // [c x c], applied to the context region
  Tensor b_g;        // [c]
  Tensor w_h;        // [1 x c]
  Tensor b_h;        // [1]
  Tensor w_m;        // [1]
  Tensor b_m;        // [1]
  Tensor ln_gain;    // [c]
  Tensor ln_bias;    // [c]

  static AttentionParams init(std::size_t channels, Rng& rng);
  std::vector<NamedTensor> named() const;
  void check(std::size_t channels) const;
};

/// Non-overlapping delta x delta spatial means, row-major over the region grid.
/// The grid must be square with side divisible by delta.
RegionSequence pool_regions(const FeatureGrid& grid, std::size_t delta);

struct AttentionResult {
  RegionSequence regions;  // LayerNorm(sum_j M_ij F_j)
  Tensor weights;          // M, [R x R], row-stochastic
};

/// For each ordered pair (i, j):
///   G_ij = tanh(W_G F_i + W_G' F_j + b_G)
///   H_ij = sigmoid(W_H G_ij + b_H)
///   M_i. = softmax_j(W_M H_ij + b_M)
/// then F~_i = sum_j M_ij F_j and the output is LayerNorm(F~_i).
AttentionResult region_attention(const RegionSequence& regions, const AttentionParams& params);

/// Mean of all descriptors, [c].
Tensor global_region_mean(const RegionSequence& regions);

}  // namespace rafa
