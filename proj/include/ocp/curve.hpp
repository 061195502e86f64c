#pragma once

// Morton (z-order) keys over the cuboid grid.
//
// Bit i of coordinate k lands on key bit (i * dims + k): x is the least
// significant lane, followed by y, z and t. Each coordinate gets
// floor(64 / dims) bits. Channels are never part of the key.

#include <array>
#include <compare>
#include <cstdint>
#include <utility>
#include <vector>

#include "ocp/dataset.hpp"
#include "ocp/types.hpp"

namespace ocp {

constexpr unsigned bits_per_dim(unsigned dims) { return 64u / dims; }

struct GridCoord {
  unsigned dims = 3;
  std::array<std::uint64_t, 4> coords{0, 0, 0, 0};

  bool operator==(const GridCoord&) const = default;
};

struct MortonKey {
  std::uint64_t value = 0;
  unsigned dims = 3;

  bool operator==(const MortonKey&) const = default;
  auto operator<=>(const MortonKey& o) const { return value <=> o.value; }
};

MortonKey morton_encode(const GridCoord& coord);
GridCoord morton_decode(MortonKey key);

/// One cuboid touched by a region, with the part of the region it covers.
struct CuboidSpan {
  MortonKey key;
  GridCoord cell;
  Box cuboid_box;    // voxel box of the whole cuboid (not clipped to extent)
  Box intersection;  // region ∩ cuboid_box
};

/// Grid cell of the voxel box of a cuboid at `level`.
Box cuboid_box(const GridCoord& cell, const ResolutionLevel& level);

/// All cuboids intersecting `region`, ascending by key. The region is
/// clipped to the level extent first; an empty result means nothing overlaps.
std::vector<CuboidSpan> cuboids_for_region(const Box& region, const ResolutionLevel& level);

/// Key interval [lo, hi] (inclusive) holding exactly the cuboids of a
/// power-of-two aligned block. Throws kAlignment for any other block.
std::pair<MortonKey, MortonKey> aligned_block_key_range(const Box& block, const ResolutionLevel& level);

/// Contiguous range partition: shard i owns [i*w, (i+1)*w) with w = ceil(N/S).
std::uint32_t shard_of(std::uint64_t key, std::uint32_t shard_count, std::uint64_t grid_cell_count);

/// One past the largest key any cuboid of `level` can have, with each grid
/// axis padded to the next power of two.
std::uint64_t key_space_size(const ResolutionLevel& level);

}  // namespace ocp
