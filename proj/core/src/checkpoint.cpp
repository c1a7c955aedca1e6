#include "rafa/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "rafa/error.hpp"

namespace rafa {

namespace {

constexpr std::array<char, 5> kMagic = {'R', 'A', 'F', 'A', '1'};
// Guards against absurd allocations from a corrupt header.
constexpr std::uint32_t kMaxNameLength = 1u << 16;
constexpr std::uint32_t kMaxRank = 8;
constexpr std::size_t kMaxElements = std::size_t{1} << 28;

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b.data(), b.size());
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  out.write(b.data(), b.size());
}

void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  std::array<unsigned char, 4> b{};
  read_exact(in, reinterpret_cast<char*>(b.data()), b.size(), what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  read_exact(in, reinterpret_cast<char*>(b.data()), b.size(), "tensor data");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_tensors(std::ostream& out, std::span<const NamedTensor> tensors) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : tensor.data()) put_f64(out, v);
  }
  if (!out) throw FormatError("failed writing checkpoint stream");
}

std::vector<NamedTensor> read_tensors(std::istream& in) {
  std::array<char, 5> magic{};
  read_exact(in, magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw FormatError("bad checkpoint magic (expected RAFA1)");
  const std::uint32_t count = get_u32(in, "tensor count");
  std::vector<NamedTensor> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = get_u32(in, "name length");
    if (name_len > kMaxNameLength) throw FormatError("checkpoint tensor name too long");
    std::string name(name_len, '\0');
    read_exact(in, name.data(), name_len, "tensor name");
    const std::uint32_t rank = get_u32(in, "rank");
    if (rank == 0 || rank > kMaxRank) {
      throw FormatError("checkpoint tensor '" + name + "' has invalid rank " +
                        std::to_string(rank));
    }
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = get_u32(in, "dimension");
      if (d == 0) throw FormatError("checkpoint tensor '" + name + "' has a zero dimension");
      numel *= d;
      if (numel > kMaxElements) {
        throw FormatError("checkpoint tensor '" + name + "' is implausibly large");
      }
    }
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = get_f64(in);
    tensors.push_back({std::move(name), Tensor::from(std::move(shape), std::move(data))});
  }
  return tensors;
}

void save_tensors(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensors(out, tensors);
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  return read_tensors(in);
}

}  // namespace rafa
