#include "rafa/model.hpp"

#include <algorithm>
#include <map>

#include "rafa/error.hpp"
#include "rafa/ops.hpp"

namespace rafa {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline:
      return "baseline";
    case Variant::roi_attention:
      return "roi_attention";
    case Variant::roi_ffn:
      return "roi_ffn";
    case Variant::full:
      return "full";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::baseline, Variant::roi_attention, Variant::roi_ffn, Variant::full}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + name +
                    "' (expected baseline, roi_attention, roi_ffn or full)");
}

void ModelConfig::validate() const {
  backbone.validate(region_size);
  pyramid.validate(region_grid_side());
  if (classes == 0) throw ConfigError("model needs at least one class");
  gaussian_dropout_std(dropout);
}

RafaParams RafaParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  // Each group draws from its own stream so adding a group never shifts
  // another group's initial values.
  const std::size_t c = cfg.channels();
  Rng backbone_rng(derive_seed(seed, 0, 1));
  Rng attention_rng(derive_seed(seed, 0, 2));
  Rng ffn_rng(derive_seed(seed, 0, 3));
  Rng refine_rng(derive_seed(seed, 0, 4));
  RafaParams p;
  p.backbone = BackboneParams::init(cfg.backbone, backbone_rng);
  p.attention = AttentionParams::init(c, attention_rng);
  p.ffn = FfnParams::init(c, ffn_rng);
  p.refine = RefineParams::init(c, cfg.classes, cfg.dropout, cfg.second_norm, refine_rng);
  return p;
}

RafaModel::RafaModel(ModelConfig cfg, RafaParams params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  params_.attention.check(cfg_.channels());
}

RafaModel RafaModel::create(const ModelConfig& cfg, std::uint64_t seed) {
  return RafaModel(cfg, RafaParams::init(cfg, seed));
}

ForwardResult RafaModel::forward(const Image& img, bool training, Rng* rng) const {
  if (cfg_.backbone.kind != BackboneKind::tiny_cnn) {
    throw ConfigError("image input needs the tiny_cnn backbone");
  }
  return forward_grid(tiny_cnn_forward(img, params_.backbone, cfg_.backbone), training, rng);
}

ForwardResult RafaModel::forward_grid(const FeatureGrid& grid, bool training, Rng* rng) const {
  if (grid.channels() != cfg_.channels()) {
    throw DimensionError("feature grid " + grid.values().shape_str() + " has " +
                         std::to_string(grid.channels()) + " channels, model expects " +
                         std::to_string(cfg_.channels()));
  }
  ForwardResult out;
  if (cfg_.variant == Variant::baseline) {
    const Tensor cells =
        reshape(grid.values(), {grid.height() * grid.width(), grid.channels()});
    out.prediction = classify(mean_rows(cells), params_.refine, training, rng);
    return out;
  }

  const FeatureGrid upsampled = bilinear_upsample(grid, cfg_.backbone.upsample_target);
  const RegionSequence regions = pool_regions(upsampled, cfg_.region_size);
  AttentionResult attended = region_attention(regions, params_.attention);
  out.region_weights = attended.weights;

  Tensor features;
  if (cfg_.variant == Variant::roi_attention) {
    features = global_region_mean(attended.regions);
  } else {
    const Tensor s_hat = path_a(attended.regions, cfg_.pyramid, params_.ffn);
    const PathBResult t = path_b(attended.regions, params_.ffn);
    features = fuse_paths(s_hat, t.summary, params_.ffn);
    if (cfg_.variant == Variant::full) {
      WeightedContext weighted = attention_weights(t.sequence, params_.refine);
      out.context_weights = weighted.weights;
      features = context_gate(features, weighted.context);
    }
  }
  out.prediction = classify(features, params_.refine, training, rng);
  return out;
}

std::vector<NamedTensor> RafaModel::parameters() const {
  std::vector<NamedTensor> out;
  auto append = [&out](std::vector<NamedTensor> group) {
    for (auto& t : group) out.push_back(std::move(t));
  };
  if (cfg_.backbone.kind == BackboneKind::tiny_cnn) append(params_.backbone.named());
  if (cfg_.variant != Variant::baseline) append(params_.attention.named());
  if (cfg_.variant == Variant::roi_ffn || cfg_.variant == Variant::full) {
    append(params_.ffn.named());
  }
  if (cfg_.variant == Variant::full) append(params_.refine.named_weighting());
  append(params_.refine.named_classifier());
  return out;
}

void RafaModel::load(std::span<const NamedTensor> tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t.tensor;
  auto expected = parameters();
  for (const auto& p : expected) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks tensor '" + p.name + "'");
    if (it->second->shape() != p.tensor.shape()) {
      throw FormatError("checkpoint tensor '" + p.name + "' has shape " +
                        it->second->shape_str() + ", model expects " + p.tensor.shape_str());
    }
  }
  for (const auto& t : tensors) {
    const bool known = std::any_of(expected.begin(), expected.end(),
                                   [&](const NamedTensor& p) { return p.name == t.name; });
    if (!known) {
      throw FormatError("checkpoint tensor '" + t.name + "' is not part of the " +
                        to_string(cfg_.variant) + " model");
    }
  }
  for (auto& p : expected) {
    auto src = by_name.at(p.name)->data();
    std::copy(src.begin(), src.end(), p.tensor.mutable_data().begin());
  }
}

}  // namespace rafa
