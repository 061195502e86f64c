#pragma once
// Brute-force reference models shared by the unit and acceptance tests.

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "ocp/annotations.hpp"
#include "ocp/volume.hpp"

namespace ocp::test {

struct Label {
  std::uint32_t primary = 0;
  std::vector<std::uint32_t> exceptions;
};

/// Per-voxel model of the write disciplines and delete promotion.
class Scene {
 public:
  void write(std::uint32_t id, const VoxelList& voxels, Discipline d) {
    for (const auto& v : voxels) {
      auto& l = voxels_[v];
      if (l.primary == id) continue;
      switch (d) {
        case Discipline::kOverwrite:
          l.primary = id;
          std::erase(l.exceptions, id);
          break;
        case Discipline::kPreserve:
          if (l.primary == 0) l.primary = id;
          break;
        case Discipline::kException:
          if (l.primary == 0)
            l.primary = id;
          else if (std::find(l.exceptions.begin(), l.exceptions.end(), id) == l.exceptions.end())
            l.exceptions.push_back(id);
          break;
      }
    }
  }
  void erase(std::uint32_t id) {
    for (auto& [v, l] : voxels_) {
      std::erase(l.exceptions, id);
      if (l.primary == id) {
        l.primary = 0;
        if (!l.exceptions.empty()) {
          l.primary = l.exceptions.front();
          l.exceptions.erase(l.exceptions.begin());
        }
      }
    }
  }
  VoxelList voxels_of(std::uint32_t id) const {
    VoxelList out;
    for (const auto& [v, l] : voxels_)
      if (l.primary == id || std::count(l.exceptions.begin(), l.exceptions.end(), id)) out.push_back(v);
    std::sort(out.begin(), out.end(), [](const Extent& a, const Extent& b) {
      return std::tie(a[3], a[2], a[1], a[0]) < std::tie(b[3], b[2], b[1], b[0]);
    });
    return out;
  }
  std::uint32_t primary(const Extent& v) const {
    auto it = voxels_.find(v);
    return it == voxels_.end() ? 0 : it->second.primary;
  }
  const std::map<Extent, Label>& all() const { return voxels_; }

 private:
  std::map<Extent, Label> voxels_;
};

/// Roughly two thirds of the voxels of a cube of radius r around c.
inline VoxelList blob(const Extent& c, std::uint64_t r, const Extent& extent, std::mt19937_64& rng) {
  VoxelList out;
  for (std::uint64_t z = c[2] > r ? c[2] - r : 0; z <= std::min(c[2] + r, extent[2] - 1); ++z)
    for (std::uint64_t y = c[1] > r ? c[1] - r : 0; y <= std::min(c[1] + r, extent[1] - 1); ++y)
      for (std::uint64_t x = c[0] > r ? c[0] - r : 0; x <= std::min(c[0] + r, extent[0] - 1); ++x)
        if (rng() % 3 != 0) out.push_back({x, y, z, 0});
  return out;
}

/// For every id, the cuboids whose stored data carry it.
inline std::map<std::uint32_t, std::vector<std::uint64_t>> scan_index(const AnnotationStore& ann, unsigned level) {
  std::map<std::uint32_t, std::set<std::uint64_t>> found;
  const auto& store = ann.store();
  for (auto m : store.stored_keys(level, 0)) {
    const auto c = store.get_cuboid(store.key(level, 0, m), true);
    for (std::uint64_t i = 0; i < c.voxel_count(); ++i)
      if (auto v = c.label(i)) found[v].insert(m);
    for (const auto& [off, ids] : c.exceptions)
      for (auto id : ids) found[id].insert(m);
  }
  std::map<std::uint32_t, std::vector<std::uint64_t>> out;
  for (auto& [id, keys] : found) out[id] = {keys.begin(), keys.end()};
  return out;
}

/// Reference volume over a whole level, maintained alongside the store.
struct Mirror {
  Box bounds;
  std::size_t width;
  std::vector<std::byte> data;
  Mirror(const Box& b, std::size_t w) : bounds(b), width(w), data(b.volume() * w) {}
  void write(const DenseVolume& v) { copy_region(v.data.data(), v.box(), data.data(), bounds, v.box(), width); }
  std::vector<std::byte> read(const Box& b) const {
    std::vector<std::byte> out(b.volume() * width);
    copy_region(data.data(), bounds, out.data(), b, b, width);
    return out;
  }
};

/// Cuboids a region intersects.
inline std::uint64_t expected_touch(const Box& b, const ResolutionLevel& lv) {
  std::uint64_t n = 1;
  for (std::size_t d = 0; d < 3; ++d) n *= (b.hi[d] - 1) / lv.cuboid[d] - b.lo[d] / lv.cuboid[d] + 1;
  return n;
}

}  // namespace ocp::test
