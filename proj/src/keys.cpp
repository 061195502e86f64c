#include "ocp/keys.hpp"

#include <bit>
#include <cstring>

#include "ocp/bytes.hpp"

namespace ocp::keys {

std::string project_prefix(std::string_view token) {
  std::string k(token);
  k.push_back('\0');
  return k;
}

std::string prefix_end(std::string_view prefix) {
  std::string end(prefix);
  while (!end.empty()) {
    auto& c = end.back();
    if (static_cast<unsigned char>(c) != 0xFF) {
      c = static_cast<char>(static_cast<unsigned char>(c) + 1);
      return end;
    }
    end.pop_back();
  }
  return std::string(64, '\xFF');
}

std::string cuboid_level_prefix(std::string_view token, unsigned level) {
  auto k = project_prefix(token);
  k.push_back('d');
  put_u8(k, static_cast<std::uint8_t>(level));
  return k;
}

std::string cuboid_level_prefix(std::string_view token, unsigned level, std::uint32_t channel) {
  auto k = cuboid_level_prefix(token, level);
  put_u16be(k, static_cast<std::uint16_t>(channel));
  return k;
}

std::string cuboid(std::string_view token, unsigned level, std::uint32_t channel, std::uint64_t morton) {
  auto k = cuboid_level_prefix(token, level, channel);
  put_u64be(k, morton);
  return k;
}

std::string exceptions(std::string_view token, unsigned level, std::uint32_t channel, std::uint64_t morton) {
  auto k = cuboid(token, level, channel, morton);
  k.append(kExceptionSuffix);
  return k;
}

std::string index_prefix(std::string_view token) {
  auto k = project_prefix(token);
  k.push_back('i');
  return k;
}

std::string index_level_prefix(std::string_view token, unsigned level) {
  auto k = index_prefix(token);
  put_u8(k, static_cast<std::uint8_t>(level));
  return k;
}

std::string index(std::string_view token, unsigned level, std::uint32_t id) {
  auto k = index_level_prefix(token, level);
  put_u32be(k, id);
  return k;
}

std::string meta_prefix(std::string_view token) {
  auto k = project_prefix(token);
  k.push_back('m');
  return k;
}

std::string meta(std::string_view token, std::uint32_t id) {
  auto k = meta_prefix(token);
  put_u32be(k, id);
  return k;
}

std::string field_prefix(std::string_view token, std::string_view field) {
  auto k = project_prefix(token);
  k.push_back('f');
  k.append(field);
  k.push_back('\0');
  return k;
}

std::string field_value_prefix(std::string_view token, std::string_view field, std::string_view value) {
  auto k = field_prefix(token, field);
  k.append(value);
  return k;
}

std::string field(std::string_view token, std::string_view field, std::string_view value, std::uint32_t id) {
  auto k = field_value_prefix(token, field, value);
  put_u32be(k, id);
  return k;
}

std::string counter(std::string_view token) {
  auto k = project_prefix(token);
  k.push_back('n');
  return k;
}

namespace {

// Position of the tag byte, or npos.
std::size_t tag_pos(std::string_view key) {
  const auto nul = key.find('\0');
  if (nul == std::string_view::npos || nul + 1 >= key.size()) return std::string_view::npos;
  return nul + 1;
}

}  // namespace

Kind kind_of(std::string_view key) {
  const auto p = tag_pos(key);
  if (p == std::string_view::npos) return Kind::kOther;
  switch (key[p]) {
    case 'd':
      return key.size() == p + 12 + kExceptionSuffix.size() ? Kind::kException : Kind::kCuboid;
    case 'i': return Kind::kIndex;
    case 'm': return Kind::kMeta;
    case 'f': return Kind::kField;
    case 'n': return Kind::kCounter;
    default: return Kind::kOther;
  }
}

std::optional<CuboidKeyParts> parse_cuboid(std::string_view key) {
  const auto p = tag_pos(key);
  if (p == std::string_view::npos || key[p] != 'd') return std::nullopt;
  const auto body = key.substr(p + 1);
  if (body.size() != 11 && body.size() != 11 + kExceptionSuffix.size()) return std::nullopt;
  CuboidKeyParts parts;
  parts.level = static_cast<unsigned char>(body[0]);
  parts.channel = (static_cast<unsigned char>(body[1]) << 8) | static_cast<unsigned char>(body[2]);
  parts.morton = get_u64be(body.substr(3));
  parts.exception = body.size() != 11;
  return parts;
}

std::uint32_t trailing_id(std::string_view key) { return get_u32be(key.substr(key.size() - 4)); }

std::string ordered_double(double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  if (bits >> 63)
    bits = ~bits;
  else
    bits |= std::uint64_t{1} << 63;
  std::string out;
  put_u64be(out, bits);
  return out;
}

}  // namespace ocp::keys
