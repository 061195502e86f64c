#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ocp {

enum class ErrorCode : int {
  kNotFound = 1,
  kBounds,
  kInvalid,
  kConflict,
  kPermission,
  kStorage,
  kIntegrity,
  kConfig,
  kAlignment,
  kOutOfRange,
  kLocked,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

// Axis order everywhere is x, y, z, t. Three-dimensional data keeps t = [0, 1).
inline constexpr std::size_t kAxes = 4;
using Extent = std::array<std::uint64_t, kAxes>;

/// Half-open voxel box [lo, hi) per axis.
struct Box {
  Extent lo{0, 0, 0, 0};
  Extent hi{0, 0, 0, 1};

  bool empty() const {
    for (std::size_t d = 0; d < kAxes; ++d)
      if (lo[d] >= hi[d]) return true;
    return false;
  }
  std::uint64_t extent(std::size_t d) const { return hi[d] > lo[d] ? hi[d] - lo[d] : 0; }
  std::uint64_t volume() const {
    std::uint64_t v = 1;
    for (std::size_t d = 0; d < kAxes; ++d) v *= extent(d);
    return v;
  }
  bool contains(const Extent& p) const {
    for (std::size_t d = 0; d < kAxes; ++d)
      if (p[d] < lo[d] || p[d] >= hi[d]) return false;
    return true;
  }
  bool contains(const Box& other) const {
    for (std::size_t d = 0; d < kAxes; ++d)
      if (other.lo[d] < lo[d] || other.hi[d] > hi[d]) return false;
    return true;
  }
  bool operator==(const Box&) const = default;
};

inline Box intersect(const Box& a, const Box& b) {
  Box r;
  for (std::size_t d = 0; d < kAxes; ++d) {
    r.lo[d] = std::max(a.lo[d], b.lo[d]);
    r.hi[d] = std::max(r.lo[d], std::min(a.hi[d], b.hi[d]));
  }
  return r;
}

inline Box make_box(std::uint64_t x0, std::uint64_t x1, std::uint64_t y0, std::uint64_t y1,
                    std::uint64_t z0, std::uint64_t z1, std::uint64_t t0 = 0, std::uint64_t t1 = 1) {
  return Box{{x0, y0, z0, t0}, {x1, y1, z1, t1}};
}

enum class VoxelType : std::uint8_t {
  kUint8 = 1,
  kUint16 = 2,
  kLabel32 = 3,
  kRgba32 = 4,
};

std::size_t voxel_width(VoxelType t);
std::string_view voxel_type_name(VoxelType t);
VoxelType parse_voxel_type(std::string_view name);
bool valid_voxel_type_code(std::uint8_t code);

/// A cutout region. Channels are addressed separately from the spatial box.
struct VoxelRegion {
  Box box;
  std::vector<std::uint32_t> channels;  // empty means channel 0
};

}  // namespace ocp
