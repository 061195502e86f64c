#pragma once
// Fixtures shared by the unit tests: in-memory engines, random volumes and
// brute-force oracles.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "ocp/engine.hpp"
#include "ocp/volume.hpp"

namespace ocp::test {

inline std::unique_ptr<Engine> memory_engine(std::size_t cache_bytes = std::size_t{64} << 20) {
  EngineOptions o;
  o.cache_bytes = cache_bytes;
  return std::make_unique<Engine>(o);
}

inline DatasetConfig dataset(const std::string& name, Extent extent, unsigned levels = 1, bool has_time = false) {
  DatasetConfig ds;
  ds.name = name;
  ds.base_extent = extent;
  ds.has_time = has_time;
  ds.levels = levels;
  return ds;
}

inline ProjectConfig image_project(const std::string& token, const std::string& ds, VoxelType vt = VoxelType::kUint8) {
  ProjectConfig p;
  p.token = token;
  p.dataset = ds;
  p.voxel_type = vt;
  return p;
}

inline ProjectConfig annotation_project(const std::string& token, const std::string& ds, bool exceptions = true) {
  ProjectConfig p;
  p.token = token;
  p.dataset = ds;
  p.type = ProjectType::kAnnotation;
  p.voxel_type = VoxelType::kLabel32;
  p.exceptions = exceptions;
  return p;
}

inline DenseVolume random_volume(VoxelType vt, const Box& box, std::mt19937_64& rng, unsigned ndim = 3) {
  auto v = DenseVolume::zeros(vt, box, {0}, ndim);
  for (auto& b : v.data) b = static_cast<std::byte>(rng());
  return v;
}

inline Box random_box(const Extent& extent, std::uint64_t max_side, std::mt19937_64& rng) {
  Box b;
  for (std::size_t d = 0; d < 3; ++d) {
    const std::uint64_t side = 1 + rng() % std::min(max_side, extent[d]);
    b.lo[d] = rng() % (extent[d] - side + 1);
    b.hi[d] = b.lo[d] + side;
  }
  b.lo[3] = 0;
  b.hi[3] = 1;
  return b;
}


/// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("ocp-test-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace ocp::test
