#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rafa/backbone.hpp"
#include "rafa/image.hpp"
#include "rafa/rng.hpp"

namespace rafa {

inline constexpr const char* kManifestName = "manifest.csv";

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::size_t label = 0;
};

/// Reads `dir/manifest.csv` (header `path,label`, zero-based labels).
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);
void write_manifest(const std::filesystem::path& dir, const std::vector<ManifestEntry>& entries);

struct Sample {
  std::string path;
  std::size_t label = 0;
  Image image;           // tiny_cnn datasets
  FeatureGrid features;  // file_features datasets
};

struct Dataset {
  std::filesystem::path root;
  std::vector<Sample> samples;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
  std::size_t max_label() const;
  std::vector<std::size_t> class_counts(std::size_t classes) const;
  /// FormatError naming the first sample whose label is >= classes.
  void check_labels(std::size_t classes) const;
};

/// Loads every entry of the manifest into memory; FormatError with the path
/// of the first unreadable file.
Dataset load_dataset(const std::filesystem::path& dir, BackboneKind kind);

/// Synthetic K-class texture set. Class k uses texture family k % 4
/// (stripes, checkerboard, blobs, linear gradient); k / 4 shifts the
/// family's orientation and frequency.
struct SynthConfig {
  std::size_t classes = 4;
  std::size_t per_class = 70;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  int image_size = 64;
  double noise_stddev = 12.0;
  std::uint64_t seed = 1;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// Per-class split sizes: val and test rounded from their fractions.
SplitSizes split_sizes(const SynthConfig& cfg);

Image synth_image(std::size_t label, const SynthConfig& cfg, Rng& rng);

/// Writes out_dir/{train,val,test}/ (each a dataset directory with its own
/// manifest) plus out_dir/manifest.csv listing every image. Splits are
/// assigned by a seeded shuffle within each class.
void generate_synthetic(const std::filesystem::path& out_dir, const SynthConfig& cfg);

}  // namespace rafa
