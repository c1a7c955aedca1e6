#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace rafa {

/// 8-bit RGB image, row-major, interleaved channels.
struct Image {
  static constexpr int kChannels = 3;

  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int h, int w, std::uint8_t fill = 0);

  bool empty() const { return height == 0 || width == 0; }
  std::size_t offset(int row, int col) const {
    return (static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
            static_cast<std::size_t>(col)) * kChannels;
  }
  std::uint8_t& at(int row, int col, int ch) { return pixels[offset(row, col) + ch]; }
  std::uint8_t at(int row, int col, int ch) const { return pixels[offset(row, col) + ch]; }

  bool operator==(const Image&) const = default;
};

/// Binary PPM (P6, maxval 255).
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);

}  // namespace rafa
