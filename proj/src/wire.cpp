#include "ocp/wire.hpp"

#include <zlib.h>

#include "json.hpp"
#include "ocp/bytes.hpp"

namespace ocp {

namespace {

/// Malformed client bodies are bad requests, not storage corruption.
template <typename F>
auto client_body(F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIntegrity) fail(ErrorCode::kInvalid, std::string("malformed body: ") + e.what());
    throw;
  }
}

}  // namespace

std::string encode_ocpb(const DenseVolume& vol, Codec codec, std::size_t channel) {
  if (vol.ndim < 3 || vol.ndim > 4) fail(ErrorCode::kInvalid, "volume must have 3 or 4 dimensions");
  if (channel >= vol.channels.size()) fail(ErrorCode::kInvalid, "no such channel in volume");
  std::string out(kOcpbMagic);
  put_u8(out, 1);
  put_u8(out, static_cast<std::uint8_t>(vol.type));
  put_u8(out, static_cast<std::uint8_t>(vol.ndim));
  put_u8(out, static_cast<std::uint8_t>(codec));
  for (unsigned d = 0; d < vol.ndim; ++d) put_u32le(out, static_cast<std::uint32_t>(vol.dims[d]));
  for (unsigned d = 0; d < vol.ndim; ++d) put_u32le(out, static_cast<std::uint32_t>(vol.offset[d]));
  const auto* raw = reinterpret_cast<const Bytef*>(vol.channel_data(channel));
  const std::size_t raw_len = vol.channel_bytes();
  if (codec == Codec::kNone) {
    put_u64le(out, raw_len);
    out.append(reinterpret_cast<const char*>(raw), raw_len);
    return out;
  }
  uLongf len = compressBound(raw_len);
  std::string packed(len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &len, raw, raw_len, Z_DEFAULT_COMPRESSION) != Z_OK)
    fail(ErrorCode::kStorage, "deflate failed");
  packed.resize(len);
  put_u64le(out, packed.size());
  out += packed;
  return out;
}

std::string encode_ocpb_channels(const DenseVolume& vol, Codec codec) {
  std::string out;
  for (std::size_t c = 0; c < vol.channels.size(); ++c) out += encode_ocpb(vol, codec, c);
  return out;
}

DenseVolume decode_ocpb(std::string_view bytes, std::size_t* consumed) {
  return client_body([&] {
    ByteReader in(bytes);
    if (in.take(4) != kOcpbMagic) fail(ErrorCode::kInvalid, "not an OCPB container");
    if (in.u8() != 1) fail(ErrorCode::kInvalid, "unsupported OCPB version");
    const auto dtype = in.u8();
    if (!valid_voxel_type_code(dtype)) fail(ErrorCode::kInvalid, "unknown OCPB dtype");
    DenseVolume vol;
    vol.type = static_cast<VoxelType>(dtype);
    vol.ndim = in.u8();
    if (vol.ndim < 3 || vol.ndim > 4) fail(ErrorCode::kInvalid, "OCPB ndim must be 3 or 4");
    const auto codec = in.u8();
    if (codec > 1) fail(ErrorCode::kInvalid, "unknown OCPB codec");
    for (unsigned d = 0; d < vol.ndim; ++d) vol.dims[d] = in.u32();
    for (unsigned d = 0; d < vol.ndim; ++d) vol.offset[d] = in.u32();
    const auto len = in.u64();
    if (len > in.remaining()) fail(ErrorCode::kInvalid, "truncated OCPB payload");
    const auto payload = in.take(len);
    const std::size_t raw_len = vol.channel_bytes();
    if (codec == 0) {
      if (payload.size() != raw_len) fail(ErrorCode::kInvalid, "OCPB payload length does not match extents");
      vol.data.resize(raw_len);
      std::memcpy(vol.data.data(), payload.data(), raw_len);
    } else {
      vol.data.resize(raw_len);
      uLongf out_len = raw_len;
      const int rc = uncompress(reinterpret_cast<Bytef*>(vol.data.data()), &out_len,
                                reinterpret_cast<const Bytef*>(payload.data()), payload.size());
      if (rc != Z_OK || out_len != raw_len) fail(ErrorCode::kInvalid, "corrupt OCPB deflate payload");
    }
    if (consumed) *consumed = bytes.size() - in.remaining();
    return vol;
  });
}

std::string encode_voxel_list(const VoxelList& voxels, unsigned ndim) {
  std::string out;
  out.reserve(4 + voxels.size() * ndim * 4);
  put_u32le(out, static_cast<std::uint32_t>(voxels.size()));
  for (const auto& v : voxels)
    for (unsigned d = 0; d < ndim; ++d) put_u32le(out, static_cast<std::uint32_t>(v[d]));
  return out;
}

VoxelList decode_voxel_list(std::string_view bytes) {
  return client_body([&] {
    ByteReader in(bytes);
    const std::uint64_t count = in.u32();
    VoxelList out;
    if (count == 0) {
      if (!in.done()) fail(ErrorCode::kInvalid, "trailing bytes after empty voxel list");
      return out;
    }
    const std::uint64_t per = in.remaining() / (4 * count);
    if ((per != 3 && per != 4) || per * 4 * count != in.remaining())
      fail(ErrorCode::kInvalid, "voxel list length does not match its count");
    out.resize(count);
    for (auto& v : out) {
      v = {0, 0, 0, 0};
      for (std::uint64_t d = 0; d < per; ++d) v[d] = in.u32();
    }
    return out;
  });
}

std::string encode_records(const std::vector<AnnotationRecord>& records) {
  std::string out(kOcpaMagic);
  put_u8(out, 1);
  put_u32le(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    put_u32le(out, static_cast<std::uint32_t>(r.metadata.size()));
    out += r.metadata;
    put_u8(out, static_cast<std::uint8_t>(r.kind));
    put_u32le(out, r.level);
    put_u64le(out, r.payload.size());
    out += r.payload;
  }
  return out;
}

std::vector<AnnotationRecord> decode_records(std::string_view bytes) {
  return client_body([&] {
    ByteReader in(bytes);
    if (in.take(4) != kOcpaMagic) fail(ErrorCode::kInvalid, "not an OCPA body");
    if (in.u8() != 1) fail(ErrorCode::kInvalid, "unsupported OCPA version");
    const auto count = in.u32();
    std::vector<AnnotationRecord> out;
    for (std::uint32_t i = 0; i < count; ++i) {
      AnnotationRecord r;
      r.metadata = std::string(in.take(in.u32()));
      const auto kind = in.u8();
      if (kind > 2) fail(ErrorCode::kInvalid, "unknown OCPA payload kind");
      r.kind = static_cast<PayloadKind>(kind);
      r.level = in.u32();
      r.payload = std::string(in.take(in.u64()));
      out.push_back(std::move(r));
    }
    if (!in.done()) fail(ErrorCode::kInvalid, "trailing bytes after OCPA records");
    return out;
  });
}

std::string box_to_json(const Box& box, unsigned ndim) {
  nlohmann::json j;
  j["lo"] = nlohmann::json::array();
  j["hi"] = nlohmann::json::array();
  for (unsigned d = 0; d < ndim; ++d) {
    j["lo"].push_back(box.lo[d]);
    j["hi"].push_back(box.hi[d]);
  }
  return j.dump();
}

std::string id_list_text(const std::vector<std::uint32_t>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(',');
    out += std::to_string(ids[i]);
  }
  return out;
}

}  // namespace ocp
