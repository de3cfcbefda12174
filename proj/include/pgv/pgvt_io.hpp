#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pgv/tensor.hpp"

namespace pgv {

// "PGVT" tensor container. Layout, all little-endian:
//   magic "PGVT" | u32 format version | u32 entry count
//   per entry: u16 name length, UTF-8 name bytes, u8 rank, u32 extents, f32 payload
// Used for checkpoints, datasets, pseudo labels and embedding export.
inline constexpr std::uint32_t kPgvtVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

void write_pgvt(const std::filesystem::path& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_pgvt(const std::filesystem::path& path);

// Throws a format error when the entry is absent.
const Tensor& find_entry(const std::vector<NamedTensor>& entries, std::string_view name,
                         const std::filesystem::path& path);
const Tensor* find_entry_opt(const std::vector<NamedTensor>& entries, std::string_view name);

}  // namespace pgv
