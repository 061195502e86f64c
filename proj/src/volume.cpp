#include "ocp/volume.hpp"

namespace ocp {

DenseVolume DenseVolume::zeros(VoxelType type, const Box& box, std::vector<std::uint32_t> channels, unsigned ndim) {
  DenseVolume v;
  v.type = type;
  v.ndim = ndim;
  v.channels = channels.empty() ? std::vector<std::uint32_t>{0} : std::move(channels);
  for (std::size_t d = 0; d < kAxes; ++d) {
    v.offset[d] = box.lo[d];
    v.dims[d] = box.extent(d);
  }
  v.data.assign(v.channel_bytes() * v.channels.size(), std::byte{0});
  return v;
}

std::uint32_t DenseVolume::value_at(std::uint64_t index, std::size_t channel) const {
  const auto w = width();
  const std::byte* p = channel_data(channel) + index * w;
  std::uint32_t v = 0;
  std::memcpy(&v, p, w);
  return v;
}

void DenseVolume::set_value_at(std::uint64_t index, std::uint32_t v, std::size_t channel) {
  const auto w = width();
  std::memcpy(channel_data(channel) + index * w, &v, w);
}

void copy_region(const std::byte* src, const Box& src_box, std::byte* dst, const Box& dst_box, const Box& region,
                 std::size_t width) {
  if (region.empty()) return;
  const std::uint64_t sx = src_box.extent(0), sy = src_box.extent(1), sz = src_box.extent(2);
  const std::uint64_t dx = dst_box.extent(0), dy = dst_box.extent(1), dz = dst_box.extent(2);
  const std::size_t row = region.extent(0) * width;
  for (std::uint64_t t = region.lo[3]; t < region.hi[3]; ++t) {
    const std::uint64_t st = t - src_box.lo[3], dt = t - dst_box.lo[3];
    for (std::uint64_t z = region.lo[2]; z < region.hi[2]; ++z) {
      const std::uint64_t sz_i = z - src_box.lo[2], dz_i = z - dst_box.lo[2];
      for (std::uint64_t y = region.lo[1]; y < region.hi[1]; ++y) {
        const std::uint64_t s = ((st * sz + sz_i) * sy + (y - src_box.lo[1])) * sx + (region.lo[0] - src_box.lo[0]);
        const std::uint64_t d = ((dt * dz + dz_i) * dy + (y - dst_box.lo[1])) * dx + (region.lo[0] - dst_box.lo[0]);
        std::memcpy(dst + d * width, src + s * width, row);
      }
    }
  }
}

}  // namespace ocp
