#pragma once

#include <cstdint>

#include "rafa/image.hpp"
#include "rafa/rng.hpp"

namespace rafa {

/// Hybrid augmentation settings: local random erase, then global
/// rotation/scale and a random crop.
struct EraseConfig {
  double frac_lo = 0.2;  // erase side, as a fraction of the image side
  double frac_hi = 0.7;
  std::uint8_t fill = 127;
  double rotation_deg = 25.0;  // angle ~ U(-rotation_deg, +rotation_deg)
  double scale_frac = 0.25;    // zoom ~ U(1 - scale_frac, 1 + scale_frac)
  int crop_h = 224;
  int crop_w = 224;
  double apply_prob = 1.0;  // probability that the erase step runs

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
  /// validate() plus the requirement that the crop fits an input of h x w.
  void validate_for_input(int h, int w) const;
};

/// Rectangle [row, row + height) x [col, col + width).
struct EraseRegion {
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;

  double area_fraction(int image_h, int image_w) const {
    return static_cast<double>(height) * width / (static_cast<double>(image_h) * image_w);
  }
};

/// Side lengths from U(frac_lo, frac_hi) * side (rounded, at least 1), then
/// an origin drawn uniformly and redrawn until the rectangle fits.
EraseRegion sample_erase_region(int image_h, int image_w, const EraseConfig& cfg, Rng& rng);
Image apply_erase(const Image& img, const EraseRegion& region, std::uint8_t fill);
Image random_erase(const Image& img, const EraseConfig& cfg, Rng& rng,
                   EraseRegion* region_out = nullptr);

struct GlobalTransformParams {
  double angle_deg = 0.0;
  double scale = 1.0;
  int crop_row = 0;
  int crop_col = 0;
};

/// Rotation by angle_deg and zoom by scale about the image center on the
/// same canvas, bilinear sampling, `fill` outside the source. A source point
/// p maps to c + scale * R(angle) (p - c) with R acting on (x=col, y=row),
/// so positive angles turn clockwise on screen.
Image warp_rotate_scale(const Image& img, double angle_deg, double scale, std::uint8_t fill);
Image crop(const Image& img, int row, int col, int h, int w);
Image center_crop(const Image& img, int h, int w);

GlobalTransformParams sample_global_transform(int image_h, int image_w, const EraseConfig& cfg,
                                              Rng& rng);
Image apply_global_transform(const Image& img, const GlobalTransformParams& params,
                             const EraseConfig& cfg);
Image global_transform(const Image& img, const EraseConfig& cfg, Rng& rng);

/// Training: random_erase (gated by apply_prob) then global_transform.
/// Inference: center crop only.
Image augment_pipeline(const Image& img, const EraseConfig& cfg, Rng& rng, bool training,
                       EraseRegion* region_out = nullptr);

/// Pipeline bound to a fixed input size; configuration errors surface at
/// construction instead of per sample.
class Augmenter {
 public:
  Augmenter(EraseConfig cfg, int input_h, int input_w);

  const EraseConfig& config() const { return cfg_; }
  Image operator()(const Image& img, Rng& rng, bool training,
                   EraseRegion* region_out = nullptr) const;

 private:
  EraseConfig cfg_;
  int input_h_;
  int input_w_;
};

}  // namespace rafa
