#include "rafa/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "rafa/error.hpp"

namespace rafa {

void EraseConfig::validate() const {
  if (!(frac_lo > 0.0 && frac_lo <= frac_hi && frac_hi <= 1.0)) {
    throw ConfigError("erase fractions must satisfy 0 < lo <= hi <= 1, got [" +
                      std::to_string(frac_lo) + ", " + std::to_string(frac_hi) + "]");
  }
  if (!(apply_prob >= 0.0 && apply_prob <= 1.0)) {
    throw ConfigError("erase apply probability must lie in [0, 1]");
  }
  if (rotation_deg < 0.0 || scale_frac < 0.0 || scale_frac >= 1.0) {
    throw ConfigError("rotation must be >= 0 and scale fraction in [0, 1)");
  }
  if (crop_h <= 0 || crop_w <= 0) throw ConfigError("crop size must be positive");
}

void EraseConfig::validate_for_input(int h, int w) const {
  validate();
  if (crop_h > h || crop_w > w) {
    throw ConfigError("crop " + std::to_string(crop_h) + "x" + std::to_string(crop_w) +
                      " larger than input " + std::to_string(h) + "x" + std::to_string(w));
  }
}

EraseRegion sample_erase_region(int image_h, int image_w, const EraseConfig& cfg, Rng& rng) {
  if (image_h <= 0 || image_w <= 0) throw ContractError("random_erase: empty image");
  auto side = [&](int full) {
    const double frac = rng.uniform(cfg.frac_lo, cfg.frac_hi);
    const int len = static_cast<int>(std::lround(frac * full));
    // Rounding must not push the side outside [frac_lo, frac_hi] * full.
    int lo = static_cast<int>(std::ceil(cfg.frac_lo * full - 1e-9));
    int hi = static_cast<int>(std::floor(cfg.frac_hi * full + 1e-9));
    lo = std::clamp(lo, 1, full);
    hi = std::clamp(hi, 1, full);
    if (lo > hi) lo = hi;
    return std::clamp(len, lo, hi);
  };
  EraseRegion r;
  r.height = side(image_h);
  r.width = side(image_w);
  do {
    r.row = static_cast<int>(rng.index(static_cast<std::size_t>(image_h)));
  } while (r.row + r.height > image_h);
  do {
    r.col = static_cast<int>(rng.index(static_cast<std::size_t>(image_w)));
  } while (r.col + r.width > image_w);
  return r;
}

Image apply_erase(const Image& img, const EraseRegion& region, std::uint8_t fill) {
  Image out = img;
  for (int y = region.row; y < region.row + region.height; ++y) {
    auto* row = &out.pixels[out.offset(y, region.col)];
    std::fill_n(row, static_cast<std::size_t>(region.width) * Image::kChannels, fill);
  }
  return out;
}

Image random_erase(const Image& img, const EraseConfig& cfg, Rng& rng, EraseRegion* region_out) {
  const EraseRegion region = sample_erase_region(img.height, img.width, cfg, rng);
  if (region_out) *region_out = region;
  return apply_erase(img, region, cfg.fill);
}

namespace {

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace

Image warp_rotate_scale(const Image& img, double angle_deg, double scale, std::uint8_t fill) {
  if (!(scale > 0.0)) throw ConfigError("warp scale must be positive");
  Image out(img.height, img.width, fill);
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
  const double max_y = img.height - 1, max_x = img.width - 1;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double sx = snap(cx + (cs * dx + sn * dy) / scale);
      const double sy = snap(cy + (-sn * dx + cs * dy) / scale);
      if (sx < 0.0 || sy < 0.0 || sx > max_x || sy > max_y) continue;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const int y1 = std::min(y0 + 1, img.height - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < Image::kChannels; ++c) {
        const double v = (1 - fy) * ((1 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c)) +
                         fy * ((1 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c));
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

Image crop(const Image& img, int row, int col, int h, int w) {
  if (row < 0 || col < 0 || h <= 0 || w <= 0 || row + h > img.height || col + w > img.width) {
    throw ContractError("crop " + std::to_string(h) + "x" + std::to_string(w) + " at (" +
                        std::to_string(row) + "," + std::to_string(col) + ") outside " +
                        std::to_string(img.height) + "x" + std::to_string(img.width) + " image");
  }
  Image out(h, w);
  for (int y = 0; y < h; ++y) {
    std::copy_n(&img.pixels[img.offset(row + y, col)],
                static_cast<std::size_t>(w) * Image::kChannels, &out.pixels[out.offset(y, 0)]);
  }
  return out;
}

Image center_crop(const Image& img, int h, int w) {
  return crop(img, (img.height - h) / 2, (img.width - w) / 2, h, w);
}

GlobalTransformParams sample_global_transform(int image_h, int image_w, const EraseConfig& cfg,
                                              Rng& rng) {
  cfg.validate_for_input(image_h, image_w);
  GlobalTransformParams p;
  p.angle_deg = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg);
  p.scale = rng.uniform(1.0 - cfg.scale_frac, 1.0 + cfg.scale_frac);
  p.crop_row = static_cast<int>(rng.index(static_cast<std::size_t>(image_h - cfg.crop_h + 1)));
  p.crop_col = static_cast<int>(rng.index(static_cast<std::size_t>(image_w - cfg.crop_w + 1)));
  return p;
}

Image apply_global_transform(const Image& img, const GlobalTransformParams& params,
                             const EraseConfig& cfg) {
  const Image warped = warp_rotate_scale(img, params.angle_deg, params.scale, cfg.fill);
  return crop(warped, params.crop_row, params.crop_col, cfg.crop_h, cfg.crop_w);
}

Image global_transform(const Image& img, const EraseConfig& cfg, Rng& rng) {
  const auto params = sample_global_transform(img.height, img.width, cfg, rng);
  return apply_global_transform(img, params, cfg);
}

Image augment_pipeline(const Image& img, const EraseConfig& cfg, Rng& rng, bool training,
                       EraseRegion* region_out) {
  cfg.validate_for_input(img.height, img.width);
  if (!training) return center_crop(img, cfg.crop_h, cfg.crop_w);
  // The gate draw is skipped at probability 0 or 1 so the remaining stream
  // matches a pipeline without the gate.
  bool erase = cfg.apply_prob >= 1.0;
  if (cfg.apply_prob > 0.0 && cfg.apply_prob < 1.0) erase = rng.uniform() < cfg.apply_prob;
  if (region_out) *region_out = EraseRegion{};
  const Image erased = erase ? random_erase(img, cfg, rng, region_out) : img;
  return global_transform(erased, cfg, rng);
}

Augmenter::Augmenter(EraseConfig cfg, int input_h, int input_w)
    : cfg_(cfg), input_h_(input_h), input_w_(input_w) {
  cfg_.validate_for_input(input_h, input_w);
}

Image Augmenter::operator()(const Image& img, Rng& rng, bool training,
                            EraseRegion* region_out) const {
  if (img.height != input_h_ || img.width != input_w_) {
    throw ContractError("augmenter expects " + std::to_string(input_h_) + "x" +
                        std::to_string(input_w_) + " images, got " + std::to_string(img.height) +
                        "x" + std::to_string(img.width));
  }
  return augment_pipeline(img, cfg_, rng, training, region_out);
}

}  // namespace rafa
