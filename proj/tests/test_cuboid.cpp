#include <random>

#include "doctest.h"
#include "ocp/cuboid.hpp"
#include "ocp/keys.hpp"

using namespace ocp;

namespace {

const Extent kShape{128, 128, 16, 1};

double ratio(const Cuboid& c) {
  return static_cast<double>(compress(c, Codec::kDeflate).size()) / static_cast<double>(c.data.size());
}

// Mostly-labeled volume: a few large objects as axis-aligned slabs.
Cuboid dense_labels(std::mt19937_64& rng) {
  auto c = Cuboid::zero(VoxelType::kLabel32, kShape);
  const std::uint32_t ids[] = {101, 2077, 31337, 9};
  for (std::uint64_t z = 0; z < 16; ++z)
    for (std::uint64_t y = 0; y < 128; ++y)
      for (std::uint64_t x = 0; x < 128; ++x) {
        const std::uint32_t id = ids[(x / 48 + 2 * (y / 64) + z / 8) % 4];
        if ((x + 7 * y + 13 * z) % 17 != 0) c.set_label(c.offset_of(x, y, z, 0), id);
      }
  (void)rng;
  return c;
}

}  // namespace

TEST_CASE("compress round-trip is lossless for every codec and type") {
  std::mt19937_64 rng(1);
  for (auto vt : {VoxelType::kUint8, VoxelType::kUint16, VoxelType::kLabel32, VoxelType::kRgba32})
    for (auto codec : {Codec::kNone, Codec::kDeflate}) {
      auto c = Cuboid::zero(vt, kShape);
      for (std::size_t i = 0; i < c.data.size(); i += 1 + rng() % 97) c.data[i] = static_cast<std::byte>(rng());
      const auto back = decompress(compress(c, codec), vt, kShape);
      CHECK(back == c);
    }
}

TEST_CASE("compression envelope") {
  std::mt19937_64 rng(2);
  const auto zero = Cuboid::zero(VoxelType::kUint8, kShape);
  CHECK(ratio(zero) < 0.01);

  const auto labels = dense_labels(rng);
  std::uint64_t labeled = 0;
  for (std::uint64_t i = 0; i < labels.voxel_count(); ++i) labeled += labels.label(i) != 0;
  REQUIRE(labeled >= labels.voxel_count() * 9 / 10);
  CHECK(ratio(labels) <= 0.15);

  auto noise = Cuboid::zero(VoxelType::kUint8, kShape);
  for (auto& b : noise.data) b = static_cast<std::byte>(rng());
  CHECK(ratio(noise) >= 0.85);
}

TEST_CASE("corrupt payloads raise integrity errors") {
  auto c = Cuboid::zero(VoxelType::kUint8, kShape);
  c.data[5] = std::byte{9};
  auto stored = compress(c, Codec::kDeflate);
  auto check_code = [](const std::string& s) {
    try {
      decode_payload(s);
      return false;
    } catch (const Error& e) {
      return e.code() == ErrorCode::kIntegrity;
    }
  };
  CHECK(check_code(stored.substr(0, stored.size() / 2)));
  CHECK(check_code(""));
  auto flipped = stored;
  flipped[0] = 7;
  CHECK(check_code(flipped));
  auto wrong_len = compress(c, Codec::kNone);
  wrong_len.pop_back();
  CHECK(check_code(wrong_len));
  CHECK_THROWS_AS(decompress(compress(c, Codec::kNone), VoxelType::kUint16, kShape), Error);
}

TEST_CASE("exception lists round-trip") {
  ExceptionList list{{0, {5, 9}}, {262143, {1}}, {77, {2, 3, 4}}};
  CHECK(decode_exceptions(encode_exceptions(list, Codec::kDeflate)) == list);
  CHECK(decode_exceptions(encode_exceptions({}, Codec::kNone)).empty());
}

TEST_CASE("zero detection honours exceptions") {
  auto c = Cuboid::zero(VoxelType::kLabel32, kShape);
  CHECK(c.all_zero());
  c.exceptions[3] = {4};
  CHECK_FALSE(c.all_zero());
  c.exceptions.clear();
  c.set_label(c.voxel_count() - 1, 1);
  CHECK_FALSE(c.all_zero());
}

TEST_CASE("cuboid keys sort by level, channel and Morton value") {
  const auto a = keys::cuboid("p", 0, 0, 5);
  const auto b = keys::cuboid("p", 0, 0, 6);
  const auto c = keys::cuboid("p", 0, 1, 0);
  const auto d = keys::cuboid("p", 1, 0, 0);
  const auto e = keys::exceptions("p", 0, 0, 5);
  CHECK(a < e);
  CHECK(e < b);
  CHECK(b < c);
  CHECK(c < d);
  CHECK(keys::kind_of(a) == keys::Kind::kCuboid);
  CHECK(keys::kind_of(e) == keys::Kind::kException);
  CHECK(keys::kind_of(keys::index("p", 0, 3)) == keys::Kind::kIndex);
  CHECK(keys::kind_of(keys::meta("p", 3)) == keys::Kind::kMeta);
  CHECK(keys::kind_of(keys::field("p", "type", "synapse", 3)) == keys::Kind::kField);
  CHECK(keys::kind_of(keys::counter("p")) == keys::Kind::kCounter);

  const auto parts = keys::parse_cuboid(e);
  REQUIRE(parts);
  CHECK(parts->level == 0);
  CHECK(parts->morton == 5);
  CHECK(parts->exception);
  CHECK(keys::trailing_id(keys::meta("p", 0xabcdef)) == 0xabcdef);
}

TEST_CASE("project key ranges do not overlap") {
  const auto pa = keys::project_prefix("a");
  const auto pab = keys::project_prefix("ab");
  CHECK(keys::cuboid("ab", 0, 0, 0) >= keys::prefix_end(pa));
  CHECK(keys::cuboid("a", 9, 9, ~0ull) < keys::prefix_end(pa));
  CHECK(pab > pa);
}

TEST_CASE("ordered doubles preserve numeric order") {
  const double v[] = {-5.5, -1, -0.0, 0.0, 1e-9, 0.5, 0.99, 1, 42};
  for (std::size_t i = 1; i < std::size(v); ++i) CHECK(keys::ordered_double(v[i - 1]) <= keys::ordered_double(v[i]));
}
