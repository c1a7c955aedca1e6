#include "rafa/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "rafa/error.hpp"

namespace rafa {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestName;
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "path,label") {
    throw FormatError("manifest " + path.string() + " must start with header 'path,label'");
  }
  std::vector<ManifestEntry> entries;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (comma == std::string::npos || comma == 0) {
      throw FormatError("malformed manifest row at " + where);
    }
    ManifestEntry e;
    e.path = trim(line.substr(0, comma));
    const std::string label = trim(line.substr(comma + 1));
    if (label.empty() || !std::all_of(label.begin(), label.end(), ::isdigit)) {
      throw FormatError("bad label '" + label + "' at " + where);
    }
    e.label = std::stoul(label);
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::filesystem::path& dir, const std::vector<ManifestEntry>& entries) {
  const auto path = dir / kManifestName;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write manifest " + path.string());
  out << "path,label\n";
  for (const auto& e : entries) out << e.path << ',' << e.label << '\n';
  if (!out) throw FormatError("failed writing manifest " + path.string());
}

std::size_t Dataset::max_label() const {
  std::size_t m = 0;
  for (const auto& s : samples) m = std::max(m, s.label);
  return m;
}

std::vector<std::size_t> Dataset::class_counts(std::size_t classes) const {
  check_labels(classes);
  std::vector<std::size_t> counts(classes, 0);
  for (const auto& s : samples) ++counts[s.label];
  return counts;
}

void Dataset::check_labels(std::size_t classes) const {
  for (const auto& s : samples) {
    if (s.label >= classes) {
      throw FormatError("manifest label " + std::to_string(s.label) + " for " + s.path +
                        " is out of range for " + std::to_string(classes) + " classes");
    }
  }
}

Dataset load_dataset(const std::filesystem::path& dir, BackboneKind kind) {
  Dataset ds;
  ds.root = dir;
  for (auto& e : read_manifest(dir)) {
    Sample s;
    s.path = e.path;
    s.label = e.label;
    const auto file = dir / e.path;
    if (kind == BackboneKind::tiny_cnn) {
      s.image = read_ppm(file);
    } else {
      s.features = load_feature_grid(file);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

SplitSizes split_sizes(const SynthConfig& cfg) {
  if (cfg.val_fraction < 0 || cfg.test_fraction < 0 || cfg.val_fraction + cfg.test_fraction > 1) {
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  }
  SplitSizes s;
  s.val = static_cast<std::size_t>(std::lround(cfg.val_fraction * cfg.per_class));
  s.test = static_cast<std::size_t>(std::lround(cfg.test_fraction * cfg.per_class));
  if (s.val + s.test > cfg.per_class) s.test = cfg.per_class - s.val;
  s.train = cfg.per_class - s.val - s.test;
  return s;
}

namespace {

struct Rgb {
  double r, g, b;
};

Rgb random_color(Rng& rng) { return {rng.uniform(0, 255), rng.uniform(0, 255), rng.uniform(0, 255)}; }

// Two colours far enough apart that the pattern stays visible.
std::pair<Rgb, Rgb> contrasting_pair(Rng& rng) {
  Rgb a = random_color(rng), b = random_color(rng);
  for (int tries = 0; tries < 64; ++tries) {
    const double d = std::abs(a.r - b.r) + std::abs(a.g - b.g) + std::abs(a.b - b.b);
    if (d > 300) break;
    b = random_color(rng);
  }
  return {a, b};
}

}  // namespace

Image synth_image(std::size_t label, const SynthConfig& cfg, Rng& rng) {
  const int n = cfg.image_size;
  const std::size_t family = label % 4;
  const std::size_t shift = label / 4;
  const double pi = std::numbers::pi;
  const auto [fg, bg] = contrasting_pair(rng);

  // Pattern mix in [0, 1] per pixel: 0 -> background, 1 -> foreground.
  std::vector<double> mix(static_cast<std::size_t>(n) * n, 0.0);
  auto at = [&](int y, int x) -> double& { return mix[static_cast<std::size_t>(y) * n + x]; };
  const double base_angle = static_cast<double>(shift) * pi / 5.0;
  switch (family) {
    case 0: {  // stripes
      const double angle = base_angle + rng.uniform(-0.25, 0.25);
      const double period = rng.uniform(5.0, 8.0) * (1.0 + 0.35 * static_cast<double>(shift % 3));
      const double phase = rng.uniform(0, 2 * pi);
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          const double u = x * std::cos(angle) + y * std::sin(angle);
          at(y, x) = 0.5 + 0.5 * std::sin(2 * pi * u / period + phase);
        }
      }
      break;
    }
    case 1: {  // checkerboard
      const double cell = rng.uniform(7.0, 11.0) * (1.0 + 0.35 * static_cast<double>(shift % 3));
      const double angle = base_angle + rng.uniform(-0.2, 0.2);
      const double ox = rng.uniform(0, cell), oy = rng.uniform(0, cell);
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          const double u = (x * std::cos(angle) + y * std::sin(angle) + ox) / cell;
          const double v = (-x * std::sin(angle) + y * std::cos(angle) + oy) / cell;
          const long parity = static_cast<long>(std::floor(u)) + static_cast<long>(std::floor(v));
          at(y, x) = (parity % 2 == 0) ? 1.0 : 0.0;
        }
      }
      break;
    }
    case 2: {  // blobs: discs with a soft 1.5 px rim
      const int blobs = 4 + static_cast<int>(rng.index(4)) + static_cast<int>(shift);
      const double scale = n / 64.0;
      for (int b = 0; b < blobs; ++b) {
        const double cy = rng.uniform(0, n), cx = rng.uniform(0, n);
        const double radius = rng.uniform(4.0, 8.0) * scale;
        for (int y = 0; y < n; ++y) {
          for (int x = 0; x < n; ++x) {
            const double d = std::hypot(y - cy, x - cx);
            const double inside = std::clamp((radius - d) / 1.5 + 0.5, 0.0, 1.0);
            at(y, x) = std::max(at(y, x), inside);
          }
        }
      }
      break;
    }
    default: {  // linear gradient
      const double angle = base_angle + rng.uniform(-pi, pi) / (1.0 + static_cast<double>(shift));
      const double c = std::cos(angle), s = std::sin(angle);
      const double half = (n - 1) / 2.0;
      const double extent = half * (std::abs(c) + std::abs(s));
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          at(y, x) = 0.5 + 0.5 * ((x - half) * c + (y - half) * s) / extent;
        }
      }
      break;
    }
  }

  Image img(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double m = at(y, x);
      const double rgb[3] = {bg.r + m * (fg.r - bg.r), bg.g + m * (fg.g - bg.g),
                             bg.b + m * (fg.b - bg.b)};
      for (int c = 0; c < 3; ++c) {
        const double v = rgb[c] + rng.normal(0.0, cfg.noise_stddev);
        img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return img;
}

void generate_synthetic(const std::filesystem::path& out_dir, const SynthConfig& cfg) {
  if (cfg.classes == 0 || cfg.per_class == 0) {
    throw ConfigError("synthetic dataset needs at least one class and one image per class");
  }
  if (cfg.image_size <= 0) throw ConfigError("image size must be positive");
  const SplitSizes sizes = split_sizes(cfg);
  namespace fs = std::filesystem;
  std::error_code ec;
  const char* split_names[3] = {"train", "val", "test"};
  for (const char* s : split_names) {
    fs::create_directories(out_dir / s, ec);
    if (ec) throw FormatError("cannot create " + (out_dir / s).string() + ": " + ec.message());
  }

  std::vector<ManifestEntry> all;
  std::vector<ManifestEntry> per_split[3];
  Rng assign(derive_seed(cfg.seed, 0, 0));
  for (std::size_t k = 0; k < cfg.classes; ++k) {
    std::vector<std::size_t> order(cfg.per_class);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[assign.index(i)]);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const std::size_t i = order[pos];
      const int split = pos < sizes.test ? 2 : (pos < sizes.test + sizes.val ? 1 : 0);
      Rng rng(derive_seed(cfg.seed, k + 1, i));
      const Image img = synth_image(k, cfg, rng);
      std::ostringstream name;
      name << "c" << k << "_" << i << ".ppm";
      write_ppm(out_dir / split_names[split] / name.str(), img);
      per_split[split].push_back({name.str(), k});
      all.push_back({std::string(split_names[split]) + "/" + name.str(), k});
    }
  }
  for (int s = 0; s < 3; ++s) write_manifest(out_dir / split_names[s], per_split[s]);
  write_manifest(out_dir, all);
}

}  // namespace rafa
