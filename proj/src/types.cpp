#include "ocp/types.hpp"

#include <cctype>

#include "ocp/dataset.hpp"

namespace ocp {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kBounds: return "bounds";
    case ErrorCode::kInvalid: return "invalid";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kPermission: return "permission";
    case ErrorCode::kStorage: return "storage";
    case ErrorCode::kIntegrity: return "integrity";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kAlignment: return "alignment";
    case ErrorCode::kOutOfRange: return "out-of-range";
    case ErrorCode::kLocked: return "locked";
  }
  return "unknown";
}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

std::size_t voxel_width(VoxelType t) {
  switch (t) {
    case VoxelType::kUint8: return 1;
    case VoxelType::kUint16: return 2;
    case VoxelType::kLabel32:
    case VoxelType::kRgba32: return 4;
  }
  fail(ErrorCode::kInvalid, "bad voxel type");
}

std::string_view voxel_type_name(VoxelType t) {
  switch (t) {
    case VoxelType::kUint8: return "uint8";
    case VoxelType::kUint16: return "uint16";
    case VoxelType::kLabel32: return "label32";
    case VoxelType::kRgba32: return "rgba32";
  }
  return "?";
}

VoxelType parse_voxel_type(std::string_view name) {
  if (name == "uint8") return VoxelType::kUint8;
  if (name == "uint16") return VoxelType::kUint16;
  if (name == "label32") return VoxelType::kLabel32;
  if (name == "rgba32") return VoxelType::kRgba32;
  fail(ErrorCode::kInvalid, "unknown voxel type: " + std::string(name));
}

bool valid_voxel_type_code(std::uint8_t code) { return code >= 1 && code <= 4; }

std::string_view project_type_name(ProjectType t) {
  return t == ProjectType::kImage ? "image" : "annotation";
}

ProjectType parse_project_type(std::string_view name) {
  if (name == "image") return ProjectType::kImage;
  if (name == "annotation") return ProjectType::kAnnotation;
  fail(ErrorCode::kInvalid, "unknown project type: " + std::string(name));
}

void DatasetConfig::validate() const {
  if (name.empty()) fail(ErrorCode::kConfig, "dataset name is empty");
  for (std::size_t d = 0; d < 3; ++d)
    if (base_extent[d] == 0) fail(ErrorCode::kConfig, "dataset extent must be positive");
  if (base_extent[3] == 0) fail(ErrorCode::kConfig, "time extent must be positive");
  if (!has_time && base_extent[3] != 1) fail(ErrorCode::kConfig, "time extent set without a time axis");
  if (channels == 0) fail(ErrorCode::kConfig, "dataset needs at least one channel");
  if (levels == 0 || levels > 16) fail(ErrorCode::kConfig, "level count must be in [1, 16]");
  if (shape_schedule.empty() || shape_schedule.front().from_level != 0)
    fail(ErrorCode::kConfig, "shape schedule must start at level 0");
  for (std::size_t i = 0; i < shape_schedule.size(); ++i) {
    const auto& rule = shape_schedule[i];
    if (i > 0 && rule.from_level <= shape_schedule[i - 1].from_level)
      fail(ErrorCode::kConfig, "shape schedule levels must increase");
    std::uint64_t n = 1;
    for (auto s : rule.shape) {
      if (s == 0) fail(ErrorCode::kConfig, "cuboid shape must be positive");
      n *= s;
    }
    if (n != kCuboidVoxels)
      fail(ErrorCode::kConfig, "cuboid shape must hold 2^18 voxels, got " + std::to_string(n));
    if (!has_time && rule.shape[3] != 1) fail(ErrorCode::kConfig, "time-chunked cuboid on a dataset without time");
  }
}

ResolutionLevel DatasetConfig::level(unsigned index) const {
  if (index >= levels) fail(ErrorCode::kNotFound, "no resolution level " + std::to_string(index));
  ResolutionLevel lv;
  lv.index = index;
  lv.curve_dims = has_time ? 4 : 3;
  lv.extent = base_extent;
  for (unsigned r = 0; r < index; ++r) {
    lv.extent[0] = (lv.extent[0] + 1) / 2;
    lv.extent[1] = (lv.extent[1] + 1) / 2;
  }
  lv.scale = std::uint64_t{1} << index;
  for (const auto& rule : shape_schedule)
    if (rule.from_level <= index) lv.cuboid = rule.shape;
  return lv;
}

void ProjectConfig::validate(const DatasetConfig& ds) const {
  if (token.empty()) fail(ErrorCode::kInvalid, "project token is empty");
  for (char c : token)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
      fail(ErrorCode::kInvalid, "project token must be [A-Za-z0-9_-]");
  if (token == "admin" || token == "tiles") fail(ErrorCode::kInvalid, "reserved token: " + token);
  if (type == ProjectType::kAnnotation && voxel_type != VoxelType::kLabel32)
    fail(ErrorCode::kConfig, "annotation projects store label32 voxels");
  if (type == ProjectType::kImage && exceptions) fail(ErrorCode::kConfig, "exceptions apply to annotation projects only");
  if (tile_size < 256 || tile_size > 1024) fail(ErrorCode::kConfig, "tile size must be in [256, 1024]");
  if (annotation_level >= ds.levels) fail(ErrorCode::kConfig, "annotation level outside hierarchy");
}

}  // namespace ocp
