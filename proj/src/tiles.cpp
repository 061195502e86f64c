#include "ocp/tiles.hpp"

#include <png.h>

namespace ocp {

std::string_view tile_plane_name(TilePlane p) {
  switch (p) {
    case TilePlane::kXY: return "xy";
    case TilePlane::kXZ: return "xz";
    case TilePlane::kYZ: return "yz";
  }
  return "?";
}

std::optional<TilePlane> parse_tile_plane(std::string_view name) {
  if (name == "xy") return TilePlane::kXY;
  if (name == "xz") return TilePlane::kXZ;
  if (name == "yz") return TilePlane::kYZ;
  return std::nullopt;
}

std::string png_encode(const Image& img) {
  if (img.samples != 1 && img.samples != 4) fail(ErrorCode::kInvalid, "images are gray or RGBA");
  if (img.pixels.size() != std::size_t{img.width} * img.height * img.samples)
    fail(ErrorCode::kInvalid, "image buffer does not match its size");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = img.width;
  image.height = img.height;
  image.format = img.samples == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGBA;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr))
    fail(ErrorCode::kStorage, std::string("png encode failed: ") + image.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr))
    fail(ErrorCode::kStorage, std::string("png encode failed: ") + image.message);
  out.resize(size);
  return out;
}

Image png_decode(std::string_view png) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, png.data(), png.size()))
    fail(ErrorCode::kInvalid, std::string("png decode failed: ") + image.message);
  Image out;
  out.width = image.width;
  out.height = image.height;
  out.samples = (image.format & PNG_FORMAT_FLAG_COLOR) || (image.format & PNG_FORMAT_FLAG_ALPHA) ? 4 : 1;
  image.format = out.samples == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGBA;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr))
    fail(ErrorCode::kInvalid, std::string("png decode failed: ") + image.message);
  return out;
}

std::array<std::uint8_t, 4> false_color(std::uint32_t id) {
  if (id == 0) return {0, 0, 0, 0};
  // Xorshifts and odd multiplications are bijections modulo 2^24.
  constexpr std::uint32_t kMask = 0xFFFFFF;
  std::uint32_t h = id & kMask;
  h ^= h >> 12;
  h = (h * 0x9E3779u) & kMask;
  h ^= h >> 11;
  h = (h * 0x5BD1E9u) & kMask;
  h ^= h >> 13;
  return {static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(h >> 8), static_cast<std::uint8_t>(h >> 16), 255};
}

Box tile_box(const TileAddress& a, std::uint64_t s) {
  const std::uint64_t r0 = a.row * s, c0 = a.col * s;
  switch (a.plane) {
    case TilePlane::kXY: return make_box(c0, c0 + s, r0, r0 + s, a.slice, a.slice + 1);
    case TilePlane::kXZ: return make_box(c0, c0 + s, a.slice, a.slice + 1, r0, r0 + s);
    case TilePlane::kYZ: return make_box(a.slice, a.slice + 1, c0, c0 + s, r0, r0 + s);
  }
  return {};
}

Image render_tile(const CuboidStore& store, const TileAddress& a, std::uint32_t channel) {
  const auto& project = store.context().project;
  const std::uint64_t s = project.tile_size;
  const auto lv = store.level(a.level);
  const Box want = tile_box(a, s);
  const Box have = intersect(want, lv.bounds());

  const bool annotation = project.type == ProjectType::kAnnotation;
  Image img;
  img.width = img.height = static_cast<std::uint32_t>(s);
  img.samples = annotation || project.voxel_type == VoxelType::kRgba32 ? 4 : 1;
  img.pixels.assign(std::size_t{img.width} * img.height * img.samples, 0);
  if (have.empty()) return img;

  const DenseVolume vol = store.read_cutout(a.level, VoxelRegion{have, {channel}});
  for (std::uint64_t z = have.lo[2]; z < have.hi[2]; ++z)
    for (std::uint64_t y = have.lo[1]; y < have.hi[1]; ++y)
      for (std::uint64_t x = have.lo[0]; x < have.hi[0]; ++x) {
        const auto v = vol.value_at(vol.index_of(x - have.lo[0], y - have.lo[1], z - have.lo[2]));
        std::uint64_t row = 0, col = 0;
        switch (a.plane) {
          case TilePlane::kXY: row = y - want.lo[1], col = x - want.lo[0]; break;
          case TilePlane::kXZ: row = z - want.lo[2], col = x - want.lo[0]; break;
          case TilePlane::kYZ: row = z - want.lo[2], col = y - want.lo[1]; break;
        }
        std::uint8_t* px = img.pixels.data() + (row * s + col) * img.samples;
        if (annotation) {
          const auto c = false_color(v);
          std::copy(c.begin(), c.end(), px);
        } else if (img.samples == 4) {
          for (unsigned k = 0; k < 4; ++k) px[k] = static_cast<std::uint8_t>(v >> (8 * k));
        } else {
          *px = static_cast<std::uint8_t>(project.voxel_type == VoxelType::kUint16 ? v >> 8 : v);
        }
      }
  return img;
}

}  // namespace ocp
