#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ocp/types.hpp"

namespace ocp {

/// Every cuboid holds exactly this many voxels, whatever its shape.
inline constexpr std::uint64_t kCuboidVoxels = std::uint64_t{1} << 18;

/// Cuboid shape used from `from_level` onwards, until a later rule takes over.
struct ShapeRule {
  unsigned from_level = 0;
  Extent shape{128, 128, 16, 1};
  bool operator==(const ShapeRule&) const = default;
};

/// Geometry of one level of the resolution hierarchy.
struct ResolutionLevel {
  unsigned index = 0;
  Extent extent{0, 0, 0, 1};   // voxels per axis
  Extent cuboid{128, 128, 16, 1};
  std::uint64_t scale = 1;     // XY scale factor relative to level 0
  unsigned curve_dims = 3;     // 3, or 4 when the dataset has a time axis

  Box bounds() const { return Box{{0, 0, 0, 0}, extent}; }
  /// Number of cuboids along each axis (partial cuboids count).
  Extent grid() const {
    Extent g{};
    for (std::size_t d = 0; d < kAxes; ++d) g[d] = (extent[d] + cuboid[d] - 1) / cuboid[d];
    return g;
  }
  std::uint64_t cuboid_voxels() const { return cuboid[0] * cuboid[1] * cuboid[2] * cuboid[3]; }
};

struct DatasetConfig {
  std::string name;
  Extent base_extent{0, 0, 0, 1};  // x, y, z, t (t = 1 when the dataset has no time axis)
  bool has_time = false;
  unsigned channels = 1;
  unsigned levels = 1;
  std::vector<ShapeRule> shape_schedule{{0, {128, 128, 16, 1}}, {4, {64, 64, 64, 1}}};

  /// Throws kConfig when the geometry is unusable.
  void validate() const;
  ResolutionLevel level(unsigned index) const;
  bool operator==(const DatasetConfig&) const = default;
};

enum class ProjectType : std::uint8_t { kImage, kAnnotation };

std::string_view project_type_name(ProjectType t);
ProjectType parse_project_type(std::string_view name);

struct ProjectConfig {
  std::string token;
  std::string dataset;
  ProjectType type = ProjectType::kImage;
  VoxelType voxel_type = VoxelType::kUint8;
  bool exceptions = false;
  bool read_only = false;
  bool compress = true;
  unsigned tile_size = 256;
  unsigned annotation_level = 0;  // level annotations are written at before propagation

  void validate(const DatasetConfig& dataset) const;
  bool operator==(const ProjectConfig&) const = default;
};

}  // namespace ocp
