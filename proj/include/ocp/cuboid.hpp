#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ocp/types.hpp"

namespace ocp {

enum class Codec : std::uint8_t { kNone = 0, kDeflate = 1 };

/// Stored payload framing: u8 codec id, u32 raw length (LE), codec stream.
std::string encode_payload(std::span<const std::byte> raw, Codec codec);
/// Throws kIntegrity on any malformed or truncated payload.
std::vector<std::byte> decode_payload(std::string_view stored);

/// Intra-cuboid voxel offset -> additional labels carried by that voxel.
using ExceptionList = std::map<std::uint32_t, std::vector<std::uint32_t>>;

struct Cuboid {
  VoxelType type = VoxelType::kUint8;
  Extent shape{128, 128, 16, 1};
  std::vector<std::byte> data;  // row-major, x fastest
  ExceptionList exceptions;

  static Cuboid zero(VoxelType type, const Extent& shape);

  std::uint64_t voxel_count() const { return shape[0] * shape[1] * shape[2] * shape[3]; }
  bool all_zero() const;
  std::uint64_t offset_of(std::uint64_t x, std::uint64_t y, std::uint64_t z, std::uint64_t t) const {
    return ((t * shape[2] + z) * shape[1] + y) * shape[0] + x;
  }
  std::uint32_t label(std::uint64_t offset) const;
  void set_label(std::uint64_t offset, std::uint32_t id);

  bool operator==(const Cuboid&) const = default;
};

std::string compress(const Cuboid& cuboid, Codec codec);
/// Rebuilds voxel data only; exceptions are stored under their own key.
Cuboid decompress(std::string_view stored, VoxelType type, const Extent& shape);

std::string encode_exceptions(const ExceptionList& list, Codec codec);
ExceptionList decode_exceptions(std::string_view stored);

}  // namespace ocp
