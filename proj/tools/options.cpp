#include "options.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "rafa/error.hpp"

namespace rafa::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& text, const std::string& what) {
  std::size_t v = 0;
  const std::string t = trim(text);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
    throw ConfigError("bad " + what + " entry '" + text + "'");
  }
  return v;
}

}  // namespace

std::vector<std::size_t> parse_size_list(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(item, what));
  if (out.empty()) throw ConfigError(what + " list is empty");
  return out;
}

std::vector<ConvStageSpec> parse_stages(const std::string& text) {
  std::vector<ConvStageSpec> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("stage '" + item + "' must be channels:stride");
    }
    out.push_back({parse_size(item.substr(0, colon), "stage"),
                   parse_size(item.substr(colon + 1), "stage")});
  }
  if (out.empty()) throw ConfigError("stage list is empty");
  return out;
}

void ModelOptions::bind(CLI::App& app) {
  app.add_option("--variant", variant, "Ablation variant")
      ->check(CLI::IsMember({"baseline", "roi_attention", "roi_ffn", "full"}));
  app.add_option("--classes", classes, "Number of classes");
  app.add_option("--backbone", backbone, "Feature extractor: tiny_cnn or file_features")
      ->check(CLI::IsMember({"tiny_cnn", "file_features"}));
  app.add_option("--stages", stages, "Tiny CNN stages as channels:stride,...");
  app.add_option("--input-size", input_size,
                 "Model input side (crop size); feature-grid side for file_features");
  app.add_option("--feature-channels", feature_channels, "Channels of file_features grids");
  app.add_option("--upsample", upsample, "Side of the upsampled feature grid");
  app.add_option("--region-size", region_size, "Region side delta on the upsampled grid");
  app.add_option("--pyramid", pyramid, "Spatial pyramid levels, comma separated");
  app.add_option("--spp-pool", spp_pool, "Pyramid bin aggregation")
      ->check(CLI::IsMember({"mean", "max"}));
  app.add_option("--dropout", dropout, "Gaussian dropout rate q");
  app.add_option("--second-norm", second_norm,
                 "Second LayerNorm before the classifier (true/false)");
}

ModelConfig ModelOptions::to_config() const {
  ModelConfig cfg;
  cfg.variant = parse_variant(variant);
  cfg.classes = classes;
  cfg.backbone.kind =
      backbone == "file_features" ? BackboneKind::file_features : BackboneKind::tiny_cnn;
  cfg.backbone.stages = parse_stages(stages);
  cfg.backbone.input_h = input_size;
  cfg.backbone.input_w = input_size;
  cfg.backbone.feature_channels = feature_channels;
  cfg.backbone.upsample_target = upsample;
  cfg.region_size = region_size;
  cfg.pyramid.levels = parse_size_list(pyramid, "pyramid level");
  cfg.pyramid.mode = spp_pool == "max" ? PoolMode::max : PoolMode::mean;
  cfg.dropout = dropout;
  cfg.second_norm = second_norm;
  cfg.validate();
  return cfg;
}

std::string ModelOptions::to_config_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "variant=" << variant << '\n'
     << "classes=" << classes << '\n'
     << "backbone=" << backbone << '\n'
     << "stages=" << stages << '\n'
     << "input-size=" << input_size << '\n'
     << "feature-channels=" << feature_channels << '\n'
     << "upsample=" << upsample << '\n'
     << "region-size=" << region_size << '\n'
     << "pyramid=" << pyramid << '\n'
     << "spp-pool=" << spp_pool << '\n'
     << "dropout=" << dropout << '\n'
     << "second-norm=" << (second_norm ? "true" : "false") << '\n';
  return os.str();
}

void AugmentOptions::bind(CLI::App& app) {
  app.add_option("--erase-lo", erase_lo, "Smallest erase side as a fraction of the image side");
  app.add_option("--erase-hi", erase_hi, "Largest erase side as a fraction of the image side");
  app.add_option("--erase-prob", erase_prob, "Probability that the erase step runs");
  app.add_option("--fill", fill, "Fill value for erased and out-of-source pixels")
      ->check(CLI::Range(0, 255));
  app.add_option("--rotation", rotation, "Rotation range in degrees (+/-)");
  app.add_option("--scale", scale, "Zoom range as a fraction (1 +/- scale)");
}

EraseConfig AugmentOptions::to_config(int crop_h, int crop_w) const {
  EraseConfig cfg;
  cfg.frac_lo = erase_lo;
  cfg.frac_hi = erase_hi;
  cfg.apply_prob = erase_prob;
  cfg.fill = static_cast<std::uint8_t>(fill);
  cfg.rotation_deg = rotation;
  cfg.scale_frac = scale;
  cfg.crop_h = crop_h;
  cfg.crop_w = crop_w;
  cfg.validate();
  return cfg;
}

void TrainOptions::bind(CLI::App& app) {
  app.add_option("--epochs", epochs, "Training epochs");
  app.add_option("--batch-size", batch_size, "Mini-batch size");
  app.add_option("--lr", lr, "Initial learning rate");
  app.add_option("--lr-drop-epoch", lr_drop_epoch,
                 "Epochs run at the initial rate before the drop");
  app.add_option("--lr-drop-factor", lr_drop_factor, "Learning-rate divisor at the drop");
  app.add_option("--momentum", momentum, "SGD momentum");
  app.add_option("--seed", seed, "Seed for initialization, shuffling and augmentation");
  app.add_flag("--no-augment", no_augment, "Train without augmentation");
}

TrainConfig TrainOptions::to_config(const AugmentOptions& aug, int input_size) const {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch_size;
  cfg.lr_initial = lr;
  cfg.lr_drop_epoch = lr_drop_epoch;
  cfg.lr_drop_factor = lr_drop_factor;
  cfg.momentum = momentum;
  cfg.seed = seed;
  cfg.augment = !no_augment;
  cfg.augmentation = aug.to_config(input_size, input_size);
  cfg.validate();
  return cfg;
}

std::vector<std::string> config_file_args(const std::filesystem::path& path,
                                          const CLI::App& sub) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::vector<std::string> args;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": expected key=value, got '" + line + "'");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    const std::string flag = "--" + key;
    if (key.empty() || key == "config" || sub.get_option_no_throw(flag) == nullptr) {
      throw ConfigError("unknown config key '" + key + "' in " + path.string());
    }
    args.push_back(flag + "=" + value);
  }
  return args;
}

}  // namespace rafa::cli
