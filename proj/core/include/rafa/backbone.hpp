#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "rafa/image.hpp"
#include "rafa/rng.hpp"
#include "rafa/tensor.hpp"

namespace rafa {

/// Spatial feature map [height x width x channels].
class FeatureGrid {
 public:
  FeatureGrid() = default;
  /// Throws DimensionError unless `values` is rank 3, NumericError on
  /// non-finite entries.
  explicit FeatureGrid(Tensor values);

  std::size_t height() const { return values_.dim(0); }
  std::size_t width() const { return values_.dim(1); }
  std::size_t channels() const { return values_.dim(2); }
  const Tensor& values() const { return values_; }

 private:
  Tensor values_;
};

enum class BackboneKind { tiny_cnn, file_features };

struct ConvStageSpec {
  std::size_t out_channels = 0;
  std::size_t stride = 1;
};

struct BackboneConfig {
  BackboneKind kind = BackboneKind::tiny_cnn;
  std::vector<ConvStageSpec> stages = {{8, 2}, {16, 2}, {32, 2}};
  int input_h = 64;
  int input_w = 64;
  std::size_t upsample_target = 12;
  // Channel count of precomputed grids when kind == file_features.
  std::size_t feature_channels = 32;

  std::size_t output_channels() const;
  /// Grid size produced by the conv stack; ConfigError when a stride does
  /// not divide the running size.
  std::pair<std::size_t, std::size_t> grid_size() const;
  /// Checks stage strides, upsample bounds and divisibility by region_size.
  void validate(std::size_t region_size) const;
};

struct ConvStage {
  Tensor weight;  // [3 x 3 x Cin x Cout]
  Tensor bias;    // [Cout]
  std::size_t stride = 1;
};

struct BackboneParams {
  std::vector<ConvStage> stages;

  static BackboneParams init(const BackboneConfig& cfg, Rng& rng);
  std::vector<NamedTensor> named() const;
};

/// Pixels mapped to [-0.5, 0.5], shape [h x w x 3].
Tensor image_to_tensor(const Image& img);

/// Stack of (3x3 conv, stride, relu) stages.
FeatureGrid tiny_cnn_forward(const Image& img, const BackboneParams& params,
                             const BackboneConfig& cfg);
FeatureGrid tiny_cnn_forward(const Tensor& pixels, const BackboneParams& params,
                             const BackboneConfig& cfg);

/// Grid stored as a single rank-3 tensor in the checkpoint format.
FeatureGrid load_feature_grid(const std::filesystem::path& path);
void save_feature_grid(const std::filesystem::path& path, const FeatureGrid& grid);

/// Bilinear (half-pixel centers, edge clamped) upsampling to target x target.
FeatureGrid bilinear_upsample(const FeatureGrid& grid, std::size_t target);

}  // namespace rafa
