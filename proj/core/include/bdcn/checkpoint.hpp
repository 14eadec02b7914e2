#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bdcn/tensor.hpp"

namespace bdcn {

// Binary container, all integers little-endian:
//   magic "BDCNCKPT" (8 bytes) | u32 version | u64 record count
//   u64 metadata count, then per pair: u64 len + key bytes, u64 len + value bytes
//   per record: u64 name length + name bytes | u64 rank | rank x u64 dims |
//               prod(dims) x f32
// Records keep their insertion order; rank is always 4 on write.

inline constexpr char kCheckpointMagic[8] = {'B', 'D', 'C', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct Checkpoint {
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<NamedTensor> records;

    /// Value for `key`, or nullptr.
    [[nodiscard]] const std::string* find_meta(const std::string& key) const;
    [[nodiscard]] const NamedTensor* find_record(const std::string& name) const;
};

[[nodiscard]] std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws IntegrityError for bad magic, unknown version, or truncation.
[[nodiscard]] Checkpoint deserialize_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
[[nodiscard]] Checkpoint read_checkpoint(const std::filesystem::path& path);

} // namespace bdcn
