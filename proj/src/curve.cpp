#include "ocp/curve.hpp"

#include <algorithm>
#include <bit>
#include <string>

namespace ocp {

namespace {

void check_dims(unsigned dims) {
  if (dims < 2 || dims > 4) fail(ErrorCode::kInvalid, "curve dimensionality must be 2, 3 or 4");
}

// Spreads the low `bits` bits of v so that consecutive bits are `stride` apart.
std::uint64_t spread(std::uint64_t v, unsigned stride) {
  std::uint64_t out = 0;
  for (unsigned i = 0; v != 0; ++i, v >>= 1)
    if (v & 1) out |= std::uint64_t{1} << (i * stride);
  return out;
}

std::uint64_t compact(std::uint64_t v, unsigned stride, unsigned bits) {
  std::uint64_t out = 0;
  for (unsigned i = 0; i < bits; ++i)
    if ((v >> (i * stride)) & 1) out |= std::uint64_t{1} << i;
  return out;
}

}  // namespace

MortonKey morton_encode(const GridCoord& coord) {
  check_dims(coord.dims);
  const unsigned bits = bits_per_dim(coord.dims);
  MortonKey key{0, coord.dims};
  for (unsigned k = 0; k < coord.dims; ++k) {
    const std::uint64_t c = coord.coords[k];
    if (bits < 64 && (c >> bits) != 0)
      fail(ErrorCode::kOutOfRange, "grid coordinate " + std::to_string(c) + " exceeds " +
                                       std::to_string(bits) + "-bit budget");
    key.value |= spread(c, coord.dims) << k;
  }
  return key;
}

GridCoord morton_decode(MortonKey key) {
  check_dims(key.dims);
  const unsigned bits = bits_per_dim(key.dims);
  GridCoord c;
  c.dims = key.dims;
  for (unsigned k = 0; k < key.dims; ++k) c.coords[k] = compact(key.value >> k, key.dims, bits);
  return c;
}

Box cuboid_box(const GridCoord& cell, const ResolutionLevel& level) {
  Box b;
  for (std::size_t d = 0; d < kAxes; ++d) {
    const std::uint64_t g = d < cell.dims ? cell.coords[d] : 0;
    b.lo[d] = g * level.cuboid[d];
    b.hi[d] = b.lo[d] + level.cuboid[d];
  }
  return b;
}

std::vector<CuboidSpan> cuboids_for_region(const Box& region, const ResolutionLevel& level) {
  const Box clipped = intersect(region, level.bounds());
  std::vector<CuboidSpan> out;
  if (clipped.empty()) return out;

  Extent glo{}, ghi{};
  for (std::size_t d = 0; d < kAxes; ++d) {
    glo[d] = clipped.lo[d] / level.cuboid[d];
    ghi[d] = (clipped.hi[d] + level.cuboid[d] - 1) / level.cuboid[d];
  }
  out.reserve((ghi[0] - glo[0]) * (ghi[1] - glo[1]) * (ghi[2] - glo[2]) * (ghi[3] - glo[3]));
  for (std::uint64_t t = glo[3]; t < ghi[3]; ++t)
    for (std::uint64_t z = glo[2]; z < ghi[2]; ++z)
      for (std::uint64_t y = glo[1]; y < ghi[1]; ++y)
        for (std::uint64_t x = glo[0]; x < ghi[0]; ++x) {
          CuboidSpan span;
          span.cell.dims = level.curve_dims;
          span.cell.coords = {x, y, z, level.curve_dims == 4 ? t : 0};
          span.key = morton_encode(span.cell);
          span.cuboid_box = cuboid_box(span.cell, level);
          span.intersection = intersect(clipped, span.cuboid_box);
          out.push_back(span);
        }
  std::sort(out.begin(), out.end(), [](const CuboidSpan& a, const CuboidSpan& b) { return a.key < b.key; });
  return out;
}

std::pair<MortonKey, MortonKey> aligned_block_key_range(const Box& block, const ResolutionLevel& level) {
  const unsigned dims = level.curve_dims;
  GridCoord lo;
  lo.dims = dims;
  std::uint64_t side = 0;
  for (unsigned d = 0; d < dims; ++d) {
    const auto c = level.cuboid[d];
    if (block.lo[d] % c != 0 || block.hi[d] % c != 0 || block.hi[d] <= block.lo[d])
      fail(ErrorCode::kAlignment, "block is not aligned to cuboid boundaries");
    const std::uint64_t cells = (block.hi[d] - block.lo[d]) / c;
    if (d == 0) side = cells;
    if (cells != side || !std::has_single_bit(cells))
      fail(ErrorCode::kAlignment, "block must be a power-of-two cube of cuboids");
    lo.coords[d] = block.lo[d] / c;
    if (lo.coords[d] % side != 0) fail(ErrorCode::kAlignment, "block origin is not a multiple of its side");
  }
  GridCoord hi = lo;
  for (unsigned d = 0; d < dims; ++d) hi.coords[d] += side - 1;
  return {morton_encode(lo), morton_encode(hi)};
}

std::uint32_t shard_of(std::uint64_t key, std::uint32_t shard_count, std::uint64_t grid_cell_count) {
  if (shard_count <= 1 || grid_cell_count == 0) return 0;
  const std::uint64_t width = (grid_cell_count + shard_count - 1) / shard_count;
  return static_cast<std::uint32_t>(std::min<std::uint64_t>(key / width, shard_count - 1));
}

std::uint64_t key_space_size(const ResolutionLevel& level) {
  GridCoord top;
  top.dims = level.curve_dims;
  const auto grid = level.grid();
  for (unsigned d = 0; d < top.dims; ++d) top.coords[d] = std::bit_ceil(grid[d]) - 1;
  return morton_encode(top).value + 1;
}

}  // namespace ocp
