#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rafa/backbone.hpp"
#include "rafa/ffn_head.hpp"
#include "rafa/image.hpp"
#include "rafa/refine.hpp"
#include "rafa/region_attention.hpp"

namespace rafa {

/// Ablation ladder: backbone + GAP classifier, then region attention, then
/// the two pooled FFN paths, then attention-weighted context gating.
enum class Variant { baseline, roi_attention, roi_ffn, full };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

struct ModelConfig {
  BackboneConfig backbone;
  std::size_t region_size = 4;
  PyramidConfig pyramid;
  std::size_t classes = 4;
  double dropout = 0.25;
  bool second_norm = true;
  Variant variant = Variant::full;

  std::size_t channels() const { return backbone.output_channels(); }
  std::size_t region_grid_side() const { return backbone.upsample_target / region_size; }
  void validate() const;
};

struct RafaParams {
  BackboneParams backbone;
  AttentionParams attention;
  FfnParams ffn;
  RefineParams refine;

  static RafaParams init(const ModelConfig& cfg, std::uint64_t seed);
};

struct ForwardResult {
  Prediction prediction;
  Tensor region_weights;   // M; undefined for the baseline
  Tensor context_weights;  // phi; defined for the full variant only
};

class RafaModel {
 public:
  RafaModel(ModelConfig cfg, RafaParams params);
  static RafaModel create(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const RafaParams& params() const { return params_; }

  /// Image through the tiny CNN backbone and the head.
  ForwardResult forward(const Image& img, bool training, Rng* rng) const;
  /// Head only, from a backbone-resolution feature grid.
  ForwardResult forward_grid(const FeatureGrid& grid, bool training, Rng* rng) const;

  /// Parameters the configured variant uses, in a stable order.
  std::vector<NamedTensor> parameters() const;
  /// Copies values from `tensors`; FormatError naming the first missing,
  /// unexpected or mis-shaped tensor.
  void load(std::span<const NamedTensor> tensors);

 private:
  ModelConfig cfg_;
  RafaParams params_;
};

}  // namespace rafa
