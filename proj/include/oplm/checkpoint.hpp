#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oplm/tensor.hpp"

namespace oplm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named tensors and text blobs, kept in insertion order.
struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::vector<std::string> tensor_names;
  std::vector<Tensor> tensors;
  std::vector<std::string> text_names;
  std::vector<std::string> texts;

  void put(const std::string& name, Tensor value);
  void put_text(const std::string& name, std::string value);
  bool has(const std::string& name) const;
  bool has_text(const std::string& name) const;
  /// Throw IoError when absent.
  const Tensor& get(const std::string& name) const;
  const std::string& get_text(const std::string& name) const;

  bool operator==(const Checkpoint& other) const;
};

/// Layout (little-endian): "OPLM", u32 version, u64 config hash, u64 record
/// count, then records of u8 kind (0 tensor, 1 text), u64 name length, name,
/// and either u64 rank, u64 dims..., f64 data, or u64 length and bytes.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

/// Writes to a temporary file and renames it into place.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Refuses a file whose config hash differs from `expected_hash` unless `force`.
Checkpoint load_checkpoint(const std::string& path, std::optional<std::uint64_t> expected_hash = std::nullopt,
                           bool force = false);

}  // namespace oplm
