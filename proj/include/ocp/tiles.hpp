#pragma once

// Tiles are synthesized on demand from cutouts. The path r/<slice>/<row>_<col>
// names one tile of side s (the project's tile size) in one viewing plane:
//
//   xy: slice = z, rows span y, columns span x
//   xz: slice = y, rows span z, columns span x
//   yz: slice = x, rows span z, columns span y
//
// Z is never resampled, so a row of an xz/yz tile is one voxel slice.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ocp/store.hpp"

namespace ocp {

enum class TilePlane : std::uint8_t { kXY, kXZ, kYZ };

std::string_view tile_plane_name(TilePlane p);
std::optional<TilePlane> parse_tile_plane(std::string_view name);

struct TileAddress {
  unsigned level = 0;
  std::uint64_t slice = 0;
  std::uint64_t row = 0;
  std::uint64_t col = 0;
  TilePlane plane = TilePlane::kXY;
};

/// Row-major 8-bit image with 1 (gray) or 4 (RGBA) samples per pixel.
struct Image {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  unsigned samples = 1;
  std::vector<std::uint8_t> pixels;

  bool operator==(const Image&) const = default;
};

std::string png_encode(const Image& img);
Image png_decode(std::string_view png);

/// Opaque RGBA (r, g, b, 255) for a nonzero id, fully transparent for 0.
/// Injective on the low 24 bits of the id.
std::array<std::uint8_t, 4> false_color(std::uint32_t id);

/// Voxel box a tile covers, before clipping to the level extent.
Box tile_box(const TileAddress& a, std::uint64_t tile_size);

/// Gray tile for uint8/uint16 projects, RGBA for rgba32 projects and
/// false-colored RGBA for annotation projects. Space outside the extent is
/// zero (black, or transparent for annotations).
Image render_tile(const CuboidStore& store, const TileAddress& a, std::uint32_t channel = 0);

}  // namespace ocp
