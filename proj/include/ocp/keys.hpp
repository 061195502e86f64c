#pragma once

// Backend key layout. Every key starts with "<project token>\0<tag>", so a
// project's keys are one contiguous range and, within tag 'd', cuboids sort
// by (level, channel, Morton value). An exception list sorts directly after
// its cuboid because its key is the cuboid key plus "/exc".
//
//   d <u8 level> <u16be channel> <u64be morton> ["/exc"]   cuboid / exceptions
//   i <u8 level> <u32be id>                                sparse object index
//   m <u32be id>                                           object metadata
//   f <field> \0 <value> <u32be id>                        metadata field index
//   n                                                      id counter

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ocp::keys {

enum class Kind { kCuboid, kException, kIndex, kMeta, kField, kCounter, kOther };

inline constexpr std::string_view kExceptionSuffix = "/exc";

std::string project_prefix(std::string_view token);
/// Smallest key greater than every key starting with `prefix`.
std::string prefix_end(std::string_view prefix);

std::string cuboid(std::string_view token, unsigned level, std::uint32_t channel, std::uint64_t morton);
std::string exceptions(std::string_view token, unsigned level, std::uint32_t channel, std::uint64_t morton);
std::string cuboid_level_prefix(std::string_view token, unsigned level, std::uint32_t channel);
std::string cuboid_level_prefix(std::string_view token, unsigned level);

std::string index(std::string_view token, unsigned level, std::uint32_t id);
std::string index_level_prefix(std::string_view token, unsigned level);
std::string index_prefix(std::string_view token);

std::string meta(std::string_view token, std::uint32_t id);
std::string meta_prefix(std::string_view token);

std::string field_prefix(std::string_view token, std::string_view field);
std::string field_value_prefix(std::string_view token, std::string_view field, std::string_view value);
std::string field(std::string_view token, std::string_view field, std::string_view value, std::uint32_t id);

std::string counter(std::string_view token);

Kind kind_of(std::string_view key);

struct CuboidKeyParts {
  unsigned level = 0;
  std::uint32_t channel = 0;
  std::uint64_t morton = 0;
  bool exception = false;
};
std::optional<CuboidKeyParts> parse_cuboid(std::string_view key);

/// Trailing big-endian u32 of index/meta/field keys.
std::uint32_t trailing_id(std::string_view key);

/// Order-preserving 8-byte encoding of a double.
std::string ordered_double(double v);

}  // namespace ocp::keys
