#include "ocp/cuboid.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>

#include "ocp/bytes.hpp"

namespace ocp {

std::string encode_payload(std::span<const std::byte> raw, Codec codec) {
  if (raw.size() > 0xFFFFFFFFu) fail(ErrorCode::kInvalid, "payload exceeds 4 GiB");
  std::string out;
  out.push_back(static_cast<char>(codec));
  put_u32le(out, static_cast<std::uint32_t>(raw.size()));
  switch (codec) {
    case Codec::kNone:
      out.append(reinterpret_cast<const char*>(raw.data()), raw.size());
      break;
    case Codec::kDeflate: {
      uLongf bound = compressBound(static_cast<uLong>(raw.size()));
      const std::size_t header = out.size();
      out.resize(header + bound);
      int rc = compress2(reinterpret_cast<Bytef*>(out.data() + header), &bound,
                         reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                         Z_BEST_SPEED);
      if (rc != Z_OK) fail(ErrorCode::kStorage, "deflate failed");
      out.resize(header + bound);
      break;
    }
    default:
      fail(ErrorCode::kInvalid, "unknown codec");
  }
  return out;
}

std::vector<std::byte> decode_payload(std::string_view stored) {
  if (stored.size() < 5) fail(ErrorCode::kIntegrity, "payload header truncated");
  const auto codec = static_cast<Codec>(stored[0]);
  const std::uint32_t raw_len = get_u32le(stored.substr(1));
  const std::string_view body = stored.substr(5);
  std::vector<std::byte> raw(raw_len);
  switch (codec) {
    case Codec::kNone:
      if (body.size() != raw_len) fail(ErrorCode::kIntegrity, "raw payload length mismatch");
      std::memcpy(raw.data(), body.data(), raw_len);
      break;
    case Codec::kDeflate: {
      uLongf len = raw_len;
      int rc = uncompress(reinterpret_cast<Bytef*>(raw.data()), &len,
                          reinterpret_cast<const Bytef*>(body.data()), static_cast<uLong>(body.size()));
      if (rc != Z_OK || len != raw_len) fail(ErrorCode::kIntegrity, "corrupt deflate payload");
      break;
    }
    default:
      fail(ErrorCode::kIntegrity, "unknown codec id " + std::to_string(static_cast<int>(stored[0])));
  }
  return raw;
}

Cuboid Cuboid::zero(VoxelType type, const Extent& shape) {
  Cuboid c;
  c.type = type;
  c.shape = shape;
  c.data.assign(c.voxel_count() * voxel_width(type), std::byte{0});
  return c;
}

bool Cuboid::all_zero() const {
  if (!exceptions.empty()) return false;
  // Word-at-a-time scan; cuboid buffers are always a multiple of 8 bytes.
  const std::size_t words = data.size() / 8;
  const auto* p = data.data();
  for (std::size_t i = 0; i < words; ++i) {
    std::uint64_t w;
    std::memcpy(&w, p + i * 8, 8);
    if (w) return false;
  }
  for (std::size_t i = words * 8; i < data.size(); ++i)
    if (data[i] != std::byte{0}) return false;
  return true;
}

std::uint32_t Cuboid::label(std::uint64_t offset) const {
  std::uint32_t v;
  std::memcpy(&v, data.data() + offset * 4, 4);
  return v;
}

void Cuboid::set_label(std::uint64_t offset, std::uint32_t id) { std::memcpy(data.data() + offset * 4, &id, 4); }

std::string compress(const Cuboid& cuboid, Codec codec) { return encode_payload(cuboid.data, codec); }

Cuboid decompress(std::string_view stored, VoxelType type, const Extent& shape) {
  Cuboid c;
  c.type = type;
  c.shape = shape;
  c.data = decode_payload(stored);
  if (c.data.size() != c.voxel_count() * voxel_width(type))
    fail(ErrorCode::kIntegrity, "cuboid payload has wrong size");
  return c;
}

std::string encode_exceptions(const ExceptionList& list, Codec codec) {
  std::string raw;
  put_u32le(raw, static_cast<std::uint32_t>(list.size()));
  for (const auto& [offset, ids] : list) {
    put_u32le(raw, offset);
    put_u32le(raw, static_cast<std::uint32_t>(ids.size()));
    for (auto id : ids) put_u32le(raw, id);
  }
  return encode_payload(std::as_bytes(std::span(raw.data(), raw.size())), codec);
}

ExceptionList decode_exceptions(std::string_view stored) {
  const auto raw = decode_payload(stored);
  ByteReader in(std::string_view(reinterpret_cast<const char*>(raw.data()), raw.size()));
  ExceptionList list;
  const std::uint32_t n = in.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t offset = in.u32();
    const std::uint32_t count = in.u32();
    if (count > in.remaining() / 4) fail(ErrorCode::kIntegrity, "exception list truncated");
    auto& ids = list[offset];
    ids.reserve(count);
    for (std::uint32_t j = 0; j < count; ++j) ids.push_back(in.u32());
  }
  if (!in.done()) fail(ErrorCode::kIntegrity, "trailing bytes in exception list");
  return list;
}

}  // namespace ocp
