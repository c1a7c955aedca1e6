#include "rafa/image.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "rafa/error.hpp"

namespace rafa {

Image::Image(int h, int w, std::uint8_t fill)
    : height(h),
      width(w),
      pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * kChannels, fill) {
  if (h < 0 || w < 0) throw ContractError("image dimensions must be non-negative");
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in, const std::filesystem::path& path) {
  std::string token;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  if (token.empty()) throw FormatError("truncated PPM header in " + path.string());
  return token;
}

int header_int(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = header_token(in, path);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError("bad PPM header field '" + tok + "' in " + path.string());
  }
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open image " + path.string());
  if (header_token(in, path) != "P6") {
    throw FormatError("not a binary PPM (P6): " + path.string());
  }
  const int width = header_int(in, path);
  const int height = header_int(in, path);
  const int maxval = header_int(in, path);
  if (maxval != 255) {
    throw FormatError("unsupported PPM maxval " + std::to_string(maxval) + " in " +
                      path.string());
  }
  // header_token consumed exactly one whitespace byte after maxval.
  Image image(height, width);
  in.read(reinterpret_cast<char*>(image.pixels.data()),
          static_cast<std::streamsize>(image.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != image.pixels.size()) {
    throw FormatError("truncated PPM pixel data in " + path.string());
  }
  return image;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

}  // namespace rafa
