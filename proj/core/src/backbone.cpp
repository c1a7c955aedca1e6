#include "rafa/backbone.hpp"

#include <cmath>

#include "rafa/checkpoint.hpp"
#include "rafa/error.hpp"
#include "rafa/ops.hpp"

namespace rafa {

FeatureGrid::FeatureGrid(Tensor values) : values_(std::move(values)) {
  if (values_.rank() != 3) {
    throw DimensionError("feature grid must be rank 3 [h x w x c], got " + values_.shape_str());
  }
  for (double v : values_.data()) {
    if (!std::isfinite(v)) throw NumericError("feature grid contains a non-finite value");
  }
}

std::size_t BackboneConfig::output_channels() const {
  if (kind == BackboneKind::file_features) return feature_channels;
  if (stages.empty()) throw ConfigError("tiny CNN needs at least one stage");
  return stages.back().out_channels;
}

std::pair<std::size_t, std::size_t> BackboneConfig::grid_size() const {
  if (input_h <= 0 || input_w <= 0) throw ConfigError("input size must be positive");
  auto h = static_cast<std::size_t>(input_h);
  auto w = static_cast<std::size_t>(input_w);
  if (kind == BackboneKind::file_features) return {h, w};
  for (const auto& s : stages) {
    if (s.stride == 0 || s.out_channels == 0) {
      throw ConfigError("conv stages need positive channels and stride");
    }
    if (h % s.stride != 0 || w % s.stride != 0) {
      throw ConfigError("stride " + std::to_string(s.stride) + " does not divide feature size " +
                        std::to_string(h) + "x" + std::to_string(w));
    }
    h /= s.stride;
    w /= s.stride;
  }
  return {h, w};
}

void BackboneConfig::validate(std::size_t region_size) const {
  const auto [h, w] = grid_size();
  output_channels();
  if (upsample_target < h || upsample_target < w) {
    throw ConfigError("upsample target " + std::to_string(upsample_target) +
                      " smaller than backbone grid " + std::to_string(h) + "x" +
                      std::to_string(w));
  }
  if (region_size == 0 || upsample_target % region_size != 0) {
    throw ConfigError("grid side " + std::to_string(upsample_target) +
                      " not divisible by region size " + std::to_string(region_size));
  }
}

BackboneParams BackboneParams::init(const BackboneConfig& cfg, Rng& rng) {
  BackboneParams p;
  if (cfg.kind == BackboneKind::file_features) return p;
  std::size_t cin = Image::kChannels;
  for (const auto& s : cfg.stages) {
    const std::size_t fan_in = 9 * cin;
    // He-uniform: keeps activation variance roughly constant through relu stages.
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> w(9 * cin * s.out_channels);
    for (double& v : w) v = rng.uniform(-bound, bound);
    p.stages.push_back({Tensor::from({3, 3, cin, s.out_channels}, std::move(w), true),
                        Tensor::zeros({s.out_channels}, true), s.stride});
    cin = s.out_channels;
  }
  return p;
}

std::vector<NamedTensor> BackboneParams::named() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string prefix = "backbone.conv" + std::to_string(i + 1);
    out.push_back({prefix + ".weight", stages[i].weight});
    out.push_back({prefix + ".bias", stages[i].bias});
  }
  return out;
}

Tensor image_to_tensor(const Image& img) {
  if (img.empty()) throw ContractError("empty image");
  std::vector<double> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.pixels[i] / 255.0 - 0.5;
  return Tensor::from({static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width),
                       static_cast<std::size_t>(Image::kChannels)},
                      std::move(v));
}

FeatureGrid tiny_cnn_forward(const Image& img, const BackboneParams& params,
                             const BackboneConfig& cfg) {
  if (img.height != cfg.input_h || img.width != cfg.input_w) {
    throw ContractError("backbone expects " + std::to_string(cfg.input_h) + "x" +
                        std::to_string(cfg.input_w) + " input, got " +
                        std::to_string(img.height) + "x" + std::to_string(img.width));
  }
  return tiny_cnn_forward(image_to_tensor(img), params, cfg);
}

FeatureGrid tiny_cnn_forward(const Tensor& pixels, const BackboneParams& params,
                             const BackboneConfig& cfg) {
  if (cfg.kind != BackboneKind::tiny_cnn) throw ConfigError("backbone kind is not tiny_cnn");
  cfg.grid_size();
  if (params.stages.size() != cfg.stages.size()) {
    throw ConfigError("backbone has " + std::to_string(params.stages.size()) +
                      " parameter stages but config lists " + std::to_string(cfg.stages.size()));
  }
  Tensor x = pixels;
  for (const auto& stage : params.stages) {
    x = relu(conv2d(x, stage.weight, stage.bias, stage.stride, 1));
  }
  return FeatureGrid(x);
}

FeatureGrid load_feature_grid(const std::filesystem::path& path) {
  auto tensors = load_tensors(path);
  if (tensors.size() != 1) {
    throw FormatError("feature file " + path.string() + " must hold exactly one tensor, found " +
                      std::to_string(tensors.size()));
  }
  if (tensors.front().tensor.rank() != 3) {
    throw FormatError("feature file " + path.string() + " holds a " +
                      tensors.front().tensor.shape_str() + " tensor, expected rank 3");
  }
  return FeatureGrid(tensors.front().tensor);
}

void save_feature_grid(const std::filesystem::path& path, const FeatureGrid& grid) {
  const NamedTensor t{"features", grid.values().detach()};
  save_tensors(path, std::span<const NamedTensor>(&t, 1));
}

FeatureGrid bilinear_upsample(const FeatureGrid& grid, std::size_t target) {
  if (target < grid.height() || target < grid.width()) {
    throw ContractError("bilinear_upsample: target " + std::to_string(target) +
                        " smaller than grid " + grid.values().shape_str() +
                        " (downsampling unsupported)");
  }
  if (target == grid.height() && target == grid.width()) return grid;
  return FeatureGrid(bilinear_resize(grid.values(), target, target));
}

}  // namespace rafa
