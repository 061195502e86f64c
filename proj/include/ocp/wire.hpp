#pragma once

// Interchange formats of the web service. All integers are little-endian.
//
// OCPB v1 (one dense volume):
//   "OCPB" u8 version=1 u8 dtype u8 ndim u8 codec
//   u32 extent[ndim] u32 offset[ndim] u64 payload_length payload
// dtype is the VoxelType code; codec 0 = raw, 1 = zlib deflate of the raw
// row-major buffer (x fastest). A multi-channel cutout is one container per
// channel, back to back, in request order.
//
// Voxel list: u32 count, then count * ndim u32 coordinates (x, y, z[, t]).
//
// OCPA v1 (annotation records, for batch reads and writes):
//   "OCPA" u8 version=1 u32 count, then per record
//   u32 meta_length, metadata JSON, u8 payload_kind (0 none, 1 voxel list,
//   2 OCPB volume), u32 level, u64 payload_length, payload

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ocp/annotations.hpp"
#include "ocp/cuboid.hpp"
#include "ocp/volume.hpp"

namespace ocp {

inline constexpr std::string_view kOcpbMagic = "OCPB";
inline constexpr std::string_view kOcpaMagic = "OCPA";

/// Encodes channel `channel` of a volume.
std::string encode_ocpb(const DenseVolume& vol, Codec codec = Codec::kNone, std::size_t channel = 0);
/// Every channel of `vol`, one container each.
std::string encode_ocpb_channels(const DenseVolume& vol, Codec codec = Codec::kNone);
/// Decodes the container at the front of `bytes`; `consumed` receives its length.
DenseVolume decode_ocpb(std::string_view bytes, std::size_t* consumed = nullptr);

std::string encode_voxel_list(const VoxelList& voxels, unsigned ndim);
/// The coordinate count per voxel is inferred from the length (3 or 4).
VoxelList decode_voxel_list(std::string_view bytes);

enum class PayloadKind : std::uint8_t { kNone = 0, kVoxels = 1, kVolume = 2 };

struct AnnotationRecord {
  std::string metadata;  // canonical JSON
  PayloadKind kind = PayloadKind::kNone;
  std::uint32_t level = 0;
  std::string payload;   // voxel list or OCPB container

  bool operator==(const AnnotationRecord&) const = default;
};

std::string encode_records(const std::vector<AnnotationRecord>& records);
std::vector<AnnotationRecord> decode_records(std::string_view bytes);

/// Box as canonical JSON: {"hi":[...],"lo":[...]} with ndim entries each.
std::string box_to_json(const Box& box, unsigned ndim);
std::string id_list_text(const std::vector<std::uint32_t>& ids);

}  // namespace ocp
