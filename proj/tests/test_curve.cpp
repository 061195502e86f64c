#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "ocp/curve.hpp"
#include "ocp/dataset.hpp"

using namespace ocp;

namespace {

// Bit-by-bit interleave, written independently of the library.
std::uint64_t interleave_oracle(const std::array<std::uint64_t, 4>& c, unsigned dims) {
  std::uint64_t key = 0;
  unsigned pos = 0;
  for (unsigned bit = 0; bit < 64 / dims; ++bit)
    for (unsigned k = 0; k < dims; ++k, ++pos) key |= ((c[k] >> bit) & 1) << pos;
  return key;
}

ResolutionLevel grid_level(Extent cells, unsigned dims = 3) {
  ResolutionLevel lv;
  lv.cuboid = {128, 128, 16, 1};
  lv.curve_dims = dims;
  for (std::size_t d = 0; d < kAxes; ++d) lv.extent[d] = cells[d] * lv.cuboid[d];
  return lv;
}

}  // namespace

TEST_CASE("morton encode matches the interleave oracle on small grids") {
  CHECK(morton_encode({3, {1, 1, 1, 0}}).value == 7);
  CHECK(morton_encode({2, {2, 1, 0, 0}}).value == 6);
  for (unsigned dims = 2; dims <= 4; ++dims)
    for (std::uint64_t i = 0; i < (1u << (2 * dims)); ++i) {
      std::array<std::uint64_t, 4> c{};
      for (unsigned k = 0; k < dims; ++k) c[k] = (i >> (2 * k)) & 3;
      CHECK(morton_encode({dims, c}).value == interleave_oracle(c, dims));
    }
}

TEST_CASE("morton decode inverts the oracle") {
  CHECK(morton_decode({7, 3}) == GridCoord{3, {1, 1, 1, 0}});
  CHECK(morton_decode({6, 2}) == GridCoord{2, {2, 1, 0, 0}});
}

TEST_CASE("morton round-trip and per-axis monotonicity on random coordinates") {
  std::mt19937_64 rng(42);
  for (unsigned dims = 2; dims <= 4; ++dims) {
    const unsigned bits = bits_per_dim(dims);
    const std::uint64_t mask = bits == 64 ? ~0ull : (std::uint64_t{1} << bits) - 1;
    for (int i = 0; i < 20000; ++i) {
      GridCoord c{dims, {}};
      for (unsigned k = 0; k < dims; ++k) c.coords[k] = rng() & mask;
      const auto key = morton_encode(c);
      REQUIRE(key.value == interleave_oracle(c.coords, dims));
      REQUIRE(morton_decode(key) == c);
      const unsigned axis = rng() % dims;
      if (c.coords[axis] < mask) {
        GridCoord up = c;
        ++up.coords[axis];
        REQUIRE(morton_encode(up).value > key.value);
      }
    }
  }
}

TEST_CASE("coordinates beyond the bit budget are rejected") {
  CHECK_THROWS_AS(morton_encode({4, {1ull << 16, 0, 0, 0}}), Error);
  CHECK_THROWS_AS(morton_encode({3, {0, 1ull << 21, 0, 0}}), Error);
}

TEST_CASE("cuboids_for_region enumerates intersecting cells in key order") {
  ResolutionLevel lv = grid_level({8, 8, 8, 1});
  const auto aligned = cuboids_for_region(make_box(0, 256, 0, 256, 0, 16), lv);
  REQUIRE(aligned.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(aligned[i].key.value == i);

  CHECK(cuboids_for_region(make_box(1, 129, 0, 1, 0, 1), lv).size() == 2);

  // Random regions against a direct enumeration.
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    Box b;
    for (std::size_t d = 0; d < 3; ++d) {
      b.lo[d] = rng() % lv.extent[d];
      b.hi[d] = b.lo[d] + 1 + rng() % (lv.extent[d] - b.lo[d]);
    }
    const auto spans = cuboids_for_region(b, lv);
    std::uint64_t expect = 1;
    for (std::size_t d = 0; d < 3; ++d)
      expect *= (b.hi[d] - 1) / lv.cuboid[d] - b.lo[d] / lv.cuboid[d] + 1;
    REQUIRE(spans.size() == expect);
    std::uint64_t covered = 0;
    for (std::size_t k = 0; k < spans.size(); ++k) {
      if (k) REQUIRE(spans[k - 1].key.value < spans[k].key.value);
      REQUIRE(b.contains(spans[k].intersection));
      covered += spans[k].intersection.volume();
    }
    REQUIRE(covered == b.volume());
  }
}

TEST_CASE("regions are clipped to the level extent") {
  ResolutionLevel lv = grid_level({2, 2, 2, 1});
  CHECK(cuboids_for_region(make_box(200, 10000, 0, 1, 0, 1), lv).size() == 1);
  CHECK(cuboids_for_region(make_box(500, 600, 0, 1, 0, 1), lv).empty());
}

TEST_CASE("aligned blocks map to contiguous key ranges") {
  ResolutionLevel lv = grid_level({8, 8, 8, 1});
  const auto [lo, hi] = aligned_block_key_range(make_box(0, 256, 0, 256, 0, 32), lv);
  CHECK(lo.value == 0);
  CHECK(hi.value == 7);

  const auto [lo2, hi2] = aligned_block_key_range(make_box(256, 512, 0, 256, 0, 32), lv);
  CHECK(hi2.value - lo2.value == 7);
  std::set<std::uint64_t> keys;
  for (std::uint64_t x = 2; x < 4; ++x)
    for (std::uint64_t y = 0; y < 2; ++y)
      for (std::uint64_t z = 0; z < 2; ++z) keys.insert(morton_encode({3, {x, y, z, 0}}).value);
  CHECK(*keys.begin() == lo2.value);
  CHECK(*keys.rbegin() == hi2.value);
  CHECK(keys.size() == 8);

  CHECK_THROWS_AS(aligned_block_key_range(make_box(0, 256, 0, 128, 0, 32), lv), Error);
  CHECK_THROWS_AS(aligned_block_key_range(make_box(128, 384, 0, 256, 0, 32), lv), Error);
  CHECK_THROWS_AS(aligned_block_key_range(make_box(1, 129, 0, 128, 0, 16), lv), Error);
}

TEST_CASE("shard_of splits the key space into equal contiguous ranges") {
  CHECK(shard_of(5, 4, 16) == 1);
  CHECK(shard_of(15, 4, 16) == 3);
  CHECK(shard_of(0, 4, 16) == 0);
  CHECK(shard_of(4, 4, 16) == 1);
  CHECK(shard_of(123, 1, 16) == 0);
  CHECK(shard_of(17, 3, 18) == 2);
  for (std::uint64_t k = 1; k < 64; ++k) CHECK(shard_of(k, 5, 64) >= shard_of(k - 1, 5, 64));
}

TEST_CASE("key space covers every cuboid of a level") {
  ResolutionLevel lv = grid_level({3, 5, 2, 1});
  const auto n = key_space_size(lv);
  for (const auto& s : cuboids_for_region(lv.bounds(), lv)) CHECK(s.key.value < n);
  CHECK(n == morton_encode({3, {3, 7, 1, 0}}).value + 1);
}
