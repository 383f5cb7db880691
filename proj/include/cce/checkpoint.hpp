// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cce/model.hpp"

namespace cce {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A model plus the encodings of its compressed matrices. For every encoded
/// matrix, model.weight(id) must equal decode_layer(encoded[id]) exactly.
struct Checkpoint {
  ModelParameters model;
  FactoredWeights encoded;

  /// Throws ValidationError on a non-compressible or mismatched encoding.
  void validate() const;
  bool operator==(const Checkpoint&) const = default;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

/// Little-endian image, layout in docs/checkpoint_format.md.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
/// Throws ChecksumError when the trailing checksum does not match and
/// ValidationError on a well-checksummed but malformed image.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cce
