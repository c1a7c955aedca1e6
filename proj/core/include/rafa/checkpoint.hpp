#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "rafa/tensor.hpp"

namespace rafa {

// Binary tensor container ("RAFA1"):
//   magic "RAFA1" | u32 count | count x (u32 name_len, name bytes,
//   u32 rank, rank x u32 dim, numel x f64)
// All integers and floats little-endian.

void write_tensors(std::ostream& out, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_tensors(std::istream& in);

void save_tensors(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

}  // namespace rafa
