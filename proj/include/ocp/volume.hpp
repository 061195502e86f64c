#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <vector>

#include "ocp/types.hpp"

namespace ocp {

/// In-memory cutout. Multi-channel volumes hold one sub-volume per channel,
/// concatenated in `channels` order.
struct DenseVolume {
  VoxelType type = VoxelType::kUint8;
  unsigned ndim = 3;                // 3 or 4 spatial/temporal axes
  Extent dims{0, 0, 0, 1};
  Extent offset{0, 0, 0, 0};
  std::vector<std::uint32_t> channels{0};
  std::vector<std::byte> data;

  static DenseVolume zeros(VoxelType type, const Box& box, std::vector<std::uint32_t> channels = {0},
                           unsigned ndim = 3);

  std::uint64_t voxel_count() const { return dims[0] * dims[1] * dims[2] * dims[3]; }
  std::size_t width() const { return voxel_width(type); }
  std::size_t channel_bytes() const { return voxel_count() * width(); }
  Box box() const {
    Box b;
    for (std::size_t d = 0; d < kAxes; ++d) {
      b.lo[d] = offset[d];
      b.hi[d] = offset[d] + dims[d];
    }
    return b;
  }
  std::uint64_t index_of(std::uint64_t x, std::uint64_t y, std::uint64_t z, std::uint64_t t = 0) const {
    return ((t * dims[2] + z) * dims[1] + y) * dims[0] + x;
  }
  std::byte* channel_data(std::size_t i) { return data.data() + i * channel_bytes(); }
  const std::byte* channel_data(std::size_t i) const { return data.data() + i * channel_bytes(); }

  std::uint32_t label_at(std::uint64_t index) const {
    std::uint32_t v;
    std::memcpy(&v, data.data() + index * 4, 4);
    return v;
  }
  void set_label_at(std::uint64_t index, std::uint32_t v) { std::memcpy(data.data() + index * 4, &v, 4); }
  /// Generic voxel value widened to 32 bits (channel 0 unless given).
  std::uint32_t value_at(std::uint64_t index, std::size_t channel = 0) const;
  void set_value_at(std::uint64_t index, std::uint32_t v, std::size_t channel = 0);

  bool operator==(const DenseVolume&) const = default;
};

/// Copies `region` from a buffer laid out over `src_box` into one laid out
/// over `dst_box`. Both buffers are row-major with x fastest.
void copy_region(const std::byte* src, const Box& src_box, std::byte* dst, const Box& dst_box, const Box& region,
                 std::size_t width);

}  // namespace ocp
