#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rafa/model.hpp"
#include "rafa/train.hpp"

namespace rafa::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kCheckFailed = 3 };

// Model flags shared by train, eval and gradcheck. Strings hold list-valued
// settings so that a config file entry and a command-line flag replace each
// other instead of concatenating.
struct ModelOptions {
  std::string variant = "full";
  std::size_t classes = 4;
  std::string backbone = "tiny_cnn";
  std::string stages = "8:2,16:2,32:2";
  int input_size = 64;
  std::size_t feature_channels = 32;
  std::size_t upsample = 12;
  std::size_t region_size = 4;
  std::string pyramid = "1,2,3";
  std::string spp_pool = "mean";
  double dropout = 0.25;
  bool second_norm = true;

  void bind(CLI::App& app);
  ModelConfig to_config() const;
  /// key=value lines accepted back through --config.
  std::string to_config_text() const;
};

struct AugmentOptions {
  double erase_lo = 0.2;
  double erase_hi = 0.7;
  double erase_prob = 1.0;
  int fill = 127;
  double rotation = 25.0;
  double scale = 0.25;

  void bind(CLI::App& app);
  EraseConfig to_config(int crop_h, int crop_w) const;
};

struct TrainOptions {
  std::size_t epochs = 100;
  std::size_t batch_size = 8;
  double lr = 0.008;
  std::size_t lr_drop_epoch = 50;
  double lr_drop_factor = 10.0;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  bool no_augment = false;

  void bind(CLI::App& app);
  TrainConfig to_config(const AugmentOptions& aug, int input_size) const;
};

std::vector<ConvStageSpec> parse_stages(const std::string& text);
std::vector<std::size_t> parse_size_list(const std::string& text, const std::string& what);

/// Reads a flat key=value file ('#' comments, blank lines ignored) into
/// "--key=value" arguments for `sub`. ConfigError on an unknown key.
std::vector<std::string> config_file_args(const std::filesystem::path& path,
                                          const CLI::App& sub);

}  // namespace rafa::cli
