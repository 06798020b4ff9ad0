#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "randes/tensor.hpp"

namespace randes {

// Checkpoint container, format version 1.
//
//   bytes 0..3    magic "RDCK"
//   bytes 4..7    u32 format version, little endian
//   bytes 8..15   u64 header length, little endian
//   then          UTF-8 JSON header, space padded so the payload starts on
//                 an 8-byte boundary
//   then          raw little-endian float32 payload
//
// The header maps tensor name -> {"dtype": "f32", "shape": [...],
// "byte_offset": N} with offsets relative to the payload start, each a
// multiple of 8. The reserved key "__metadata__" holds a string-to-string
// map. Serialization is canonical: names sorted, payload in name order, so
// equal tensor maps produce byte-identical files.

inline constexpr uint32_t kCheckpointFormatVersion = 1;

std::vector<uint8_t> serialize_checkpoint(const TensorMap& map);
TensorMap deserialize_checkpoint(const std::vector<uint8_t>& bytes,
                                 const std::string& origin = "<memory>");

void write_checkpoint(const TensorMap& map, const std::filesystem::path& path);
TensorMap read_checkpoint(const std::filesystem::path& path);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);

// SHA-256 of the canonical serialization of the map.
std::string checkpoint_digest(const TensorMap& map);
// SHA-256 of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

}  // namespace randes
