#include "ocp/pyramid.hpp"

#include <algorithm>
#include <set>

#include "ocp/annotations.hpp"

namespace ocp {

namespace {

/// Target cuboids of `dst` fed by the stored cuboids of `src`.
std::set<std::uint64_t> fed_cells(const CuboidStore& store, const ResolutionLevel& src, const ResolutionLevel& dst,
                                  std::uint32_t channel) {
  std::set<std::uint64_t> out;
  const bool down = dst.index > src.index;
  for (auto m : store.stored_keys(src.index, channel)) {
    Box b = intersect(cuboid_box(morton_decode(MortonKey{m, src.curve_dims}), src), src.bounds());
    for (std::size_t d = 0; d < 2; ++d) {
      b.lo[d] = down ? b.lo[d] / 2 : b.lo[d] * 2;
      b.hi[d] = down ? (b.hi[d] + 1) / 2 : b.hi[d] * 2;
    }
    for (const auto& span : cuboids_for_region(intersect(b, dst.bounds()), dst)) out.insert(span.key.value);
  }
  return out;
}

/// Clipped voxel box of a target cuboid and the source box it reads from.
std::pair<Box, Box> target_and_source(std::uint64_t morton, const ResolutionLevel& src, const ResolutionLevel& dst) {
  const Box tbox = intersect(cuboid_box(morton_decode(MortonKey{morton, dst.curve_dims}), dst), dst.bounds());
  Box sbox = tbox;
  const bool down = dst.index > src.index;
  for (std::size_t d = 0; d < 2; ++d) {
    sbox.lo[d] = down ? tbox.lo[d] * 2 : tbox.lo[d] / 2;
    sbox.hi[d] = down ? tbox.hi[d] * 2 : (tbox.hi[d] + 1) / 2;
  }
  return {tbox, intersect(sbox, src.bounds())};
}

/// Labels and exception lists of one level over a region, by voxel coordinate.
class LabelView {
 public:
  LabelView(const CuboidStore& store, const ResolutionLevel& lv, const Box& region) {
    const auto spans = cuboids_for_region(region, lv);
    std::vector<std::uint64_t> mortons;
    for (const auto& s : spans) mortons.push_back(s.key.value);
    auto fetched = store.fetch(lv.index, 0, mortons, true);
    for (std::size_t i = 0; i < spans.size(); ++i) parts_.push_back({spans[i].cuboid_box, std::move(fetched[i])});
  }

  std::uint32_t label(const Extent& p, const std::vector<std::uint32_t>** exceptions) {
    *exceptions = nullptr;
    const Part& part = find(p);
    if (!part.cuboid) return 0;
    const auto off = part.cuboid->offset_of(p[0] - part.box.lo[0], p[1] - part.box.lo[1], p[2] - part.box.lo[2],
                                            p[3] - part.box.lo[3]);
    if (auto it = part.cuboid->exceptions.find(static_cast<std::uint32_t>(off)); it != part.cuboid->exceptions.end())
      *exceptions = &it->second;
    return part.cuboid->label(off);
  }

 private:
  struct Part {
    Box box;
    std::optional<Cuboid> cuboid;
  };
  const Part& find(const Extent& p) {
    if (last_ < parts_.size() && parts_[last_].box.contains(p)) return parts_[last_];
    for (std::size_t i = 0; i < parts_.size(); ++i)
      if (parts_[i].box.contains(p)) {
        last_ = i;
        return parts_[i];
      }
    fail(ErrorCode::kIntegrity, "voxel outside the fetched source region");
  }
  std::vector<Part> parts_;
  std::size_t last_ = 0;
};

ProjectContext maintenance(const ProjectContext& ctx) {
  ProjectContext m = ctx;
  m.maintenance = true;
  return m;
}

void downsample_image(CuboidStore& store, const ResolutionLevel& src, const ResolutionLevel& dst) {
  const VoxelType type = store.context().project.voxel_type;
  for (std::uint32_t ch = 0; ch < store.context().dataset.channels; ++ch) {
    for (auto morton : fed_cells(store, src, dst, ch)) {
      const auto [tbox, sbox] = target_and_source(morton, src, dst);
      const DenseVolume in = store.read_cutout(src.index, VoxelRegion{sbox, {ch}});
      DenseVolume out = DenseVolume::zeros(type, tbox, {ch}, in.ndim);
      std::array<std::uint32_t, 4> samples{};
      for (std::uint64_t t = 0; t < out.dims[3]; ++t)
        for (std::uint64_t z = 0; z < out.dims[2]; ++z)
          for (std::uint64_t y = 0; y < out.dims[1]; ++y)
            for (std::uint64_t x = 0; x < out.dims[0]; ++x) {
              std::size_t n = 0;
              for (std::uint64_t dy = 0; dy < 2; ++dy)
                for (std::uint64_t dx = 0; dx < 2; ++dx) {
                  const std::uint64_t sx = 2 * (tbox.lo[0] + x) + dx - sbox.lo[0];
                  const std::uint64_t sy = 2 * (tbox.lo[1] + y) + dy - sbox.lo[1];
                  if (sx < in.dims[0] && sy < in.dims[1]) samples[n++] = in.value_at(in.index_of(sx, sy, z, t));
                }
              const auto v = type == VoxelType::kLabel32 ? vote_label(std::span(samples.data(), n))
                                                         : mean_half_up(std::span(samples.data(), n), type);
              out.set_value_at(out.index_of(x, y, z, t), v);
            }
      store.write_cutout(dst.index, VoxelRegion{tbox, {ch}}, out);
    }
  }
}

/// One annotation level from its neighbour: vote when shrinking, replicate when growing.
void resample_labels(CuboidStore& store, const ResolutionLevel& src, const ResolutionLevel& dst) {
  const bool down = dst.index > src.index;
  const VoxelType type = store.context().project.voxel_type;
  for (auto morton : fed_cells(store, src, dst, 0)) {
    const auto [tbox, sbox] = target_and_source(morton, src, dst);
    LabelView view(store, src, sbox);
    const Box cbox = cuboid_box(morton_decode(MortonKey{morton, dst.curve_dims}), dst);
    Cuboid c = Cuboid::zero(type, dst.cuboid);
    const std::vector<std::uint32_t>* exc = nullptr;
    std::array<std::uint32_t, 4> samples{};
    for (std::uint64_t t = tbox.lo[3]; t < tbox.hi[3]; ++t)
      for (std::uint64_t z = tbox.lo[2]; z < tbox.hi[2]; ++z)
        for (std::uint64_t y = tbox.lo[1]; y < tbox.hi[1]; ++y)
          for (std::uint64_t x = tbox.lo[0]; x < tbox.hi[0]; ++x) {
            const auto off = c.offset_of(x - cbox.lo[0], y - cbox.lo[1], z - cbox.lo[2], t - cbox.lo[3]);
            if (down) {
              std::size_t n = 0;
              for (std::uint64_t dy = 0; dy < 2; ++dy)
                for (std::uint64_t dx = 0; dx < 2; ++dx) {
                  const Extent p{2 * x + dx, 2 * y + dy, z, t};
                  if (sbox.contains(p)) samples[n++] = view.label(p, &exc);
                }
              c.set_label(off, vote_label(std::span(samples.data(), n)));
            } else {
              c.set_label(off, view.label({x / 2, y / 2, z, t}, &exc));
              if (exc) c.exceptions[static_cast<std::uint32_t>(off)] = *exc;
            }
          }
    store.put_cuboid(store.key(dst.index, 0, morton), c);
  }
}

}  // namespace

ProjectLock::ProjectLock(ProjectState& state) : state_(state) {
  bool expected = false;
  if (!state_.locked.compare_exchange_strong(expected, true))
    fail(ErrorCode::kLocked, "project is already locked by a batch job");
}

ProjectLock::~ProjectLock() { state_.locked.store(false); }

std::uint32_t mean_half_up(std::span<const std::uint32_t> samples, VoxelType type) {
  if (samples.empty()) return 0;
  const std::uint64_t n = samples.size();
  auto mean = [n](std::uint64_t sum) { return static_cast<std::uint32_t>((2 * sum + n) / (2 * n)); };
  if (type != VoxelType::kRgba32) {
    std::uint64_t sum = 0;
    for (auto s : samples) sum += s;
    return mean(sum);
  }
  std::uint32_t out = 0;
  for (unsigned shift = 0; shift < 32; shift += 8) {
    std::uint64_t sum = 0;
    for (auto s : samples) sum += (s >> shift) & 0xFF;
    out |= mean(sum) << shift;
  }
  return out;
}

std::uint32_t vote_label(std::span<const std::uint32_t> labels) {
  std::uint32_t best = 0;
  std::size_t best_count = 0;
  for (auto a : labels) {
    if (a == 0) continue;
    const auto count = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), a));
    if (count > best_count || (count == best_count && a < best)) {
      best = a;
      best_count = count;
    }
  }
  return best;
}

void build_image_pyramid(const ProjectContext& ctx) {
  ProjectLock lock(*ctx.state);
  CuboidStore store(maintenance(ctx));
  store.check_writable();
  for (unsigned r = 1; r < ctx.dataset.levels; ++r) {
    store.clear_level(r);
    downsample_image(store, store.level(r - 1), store.level(r));
  }
}

void propagate_annotations(const ProjectContext& ctx) {
  if (ctx.project.type != ProjectType::kAnnotation)
    fail(ErrorCode::kInvalid, "project " + ctx.project.token + " is not an annotation project");
  ProjectLock lock(*ctx.state);
  // Waits out any foreground write that started before the lock.
  std::lock_guard writes(ctx.state->write_mu);
  AnnotationStore ann(maintenance(ctx));
  CuboidStore& store = ann.store();
  store.check_writable();
  const unsigned base = ctx.project.annotation_level;
  for (unsigned r = base + 1; r < ctx.dataset.levels; ++r) {
    store.clear_level(r);
    resample_labels(store, store.level(r - 1), store.level(r));
  }
  for (unsigned r = base; r-- > 0;) {
    store.clear_level(r);
    resample_labels(store, store.level(r + 1), store.level(r));
  }
  for (unsigned r = 0; r < ctx.dataset.levels; ++r) ann.rebuild_index(r);
}

}  // namespace ocp
