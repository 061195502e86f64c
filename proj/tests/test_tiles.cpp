#include <random>
#include <vector>

#include "doctest.h"
#include "ocp/annotations.hpp"
#include "ocp/tiles.hpp"
#include "support.hpp"

using namespace ocp;

namespace {

struct Fixture {
  std::unique_ptr<Engine> engine = test::memory_engine();
  DenseVolume written;

  explicit Fixture(VoxelType vt = VoxelType::kUint8) {
    engine->create_dataset(test::dataset("ds", {600, 500, 40, 1}, 2));
    auto p = test::image_project("img", "ds", vt);
    engine->create_project(p);
    std::mt19937_64 rng(21);
    auto store = engine->store("img");
    written = test::random_volume(vt, store.level(0).bounds(), rng);
    store.write_cutout(0, {written.box(), {}}, written);
  }
};

std::uint8_t gray(const DenseVolume& v, std::uint64_t x, std::uint64_t y, std::uint64_t z) {
  const auto value = v.value_at(v.index_of(x, y, z));
  return static_cast<std::uint8_t>(v.type == VoxelType::kUint16 ? value >> 8 : value);
}

}  // namespace

TEST_CASE("xy tiles equal the cutout of the same region") {
  Fixture f;
  const auto store = f.engine->store("img");
  for (std::uint64_t row = 0; row < 2; ++row)
    for (std::uint64_t col = 0; col < 3; ++col) {
      const auto img = render_tile(store, {0, 17, row, col, TilePlane::kXY});
      REQUIRE(img.width == 256);
      REQUIRE(img.samples == 1);
      for (std::uint64_t y = 0; y < 256; ++y)
        for (std::uint64_t x = 0; x < 256; ++x) {
          const std::uint64_t vx = col * 256 + x, vy = row * 256 + y;
          const std::uint8_t expect = vx < 600 && vy < 500 ? gray(f.written, vx, vy, 17) : 0;
          REQUIRE(img.pixels[y * 256 + x] == expect);
        }
    }
}

TEST_CASE("orthogonal tiles are transposed cutout slices without z resampling") {
  Fixture f(VoxelType::kUint16);
  const auto store = f.engine->store("img");
  const auto xz = render_tile(store, {0, 123, 0, 1, TilePlane::kXZ});
  const auto yz = render_tile(store, {0, 321, 0, 0, TilePlane::kYZ});
  for (std::uint64_t r = 0; r < 256; ++r)
    for (std::uint64_t c = 0; c < 256; ++c) {
      const bool in_z = r < 40;
      REQUIRE(xz.pixels[r * 256 + c] == (in_z && 256 + c < 600 ? gray(f.written, 256 + c, 123, r) : 0));
      REQUIRE(yz.pixels[r * 256 + c] == (in_z ? gray(f.written, 321, c, r) : 0));
    }
  CHECK(tile_box({0, 123, 0, 1, TilePlane::kXZ}, 256) == make_box(256, 512, 123, 124, 0, 256));
}

TEST_CASE("tiles outside the extent are black and constant volumes give constant tiles") {
  auto e = test::memory_engine();
  e->create_dataset(test::dataset("ds", {512, 512, 16, 1}));
  auto p = test::image_project("img", "ds");
  p.tile_size = 512;
  e->create_project(p);
  auto store = e->store("img");
  const auto blank = render_tile(store, {0, 3, 0, 0, TilePlane::kXY});
  CHECK(blank.pixels == std::vector<std::uint8_t>(512 * 512, 0));
  CHECK(render_tile(store, {0, 99, 0, 0, TilePlane::kXY}).pixels == blank.pixels);
  CHECK(render_tile(store, {0, 0, 5, 5, TilePlane::kXY}).pixels == blank.pixels);

  auto v = DenseVolume::zeros(VoxelType::kUint8, store.level(0).bounds());
  std::fill(v.data.begin(), v.data.end(), std::byte{77});
  store.write_cutout(0, {v.box(), {}}, v);
  CHECK(render_tile(store, {0, 3, 0, 0, TilePlane::kXY}).pixels == std::vector<std::uint8_t>(512 * 512, 77));
  const auto yz = render_tile(store, {0, 3, 0, 0, TilePlane::kYZ});
  for (std::uint64_t r = 0; r < 512; ++r)
    for (std::uint64_t c = 0; c < 512; ++c) REQUIRE(yz.pixels[r * 512 + c] == (r < 16 ? 77 : 0));
}

TEST_CASE("false colors are opaque, deterministic and distinct below one million") {
  CHECK(false_color(0) == std::array<std::uint8_t, 4>{0, 0, 0, 0});
  std::vector<bool> seen(1u << 24);
  for (std::uint32_t id = 1; id < 1000000; ++id) {
    const auto c = false_color(id);
    REQUIRE(c[3] == 255);
    const std::uint32_t rgb = c[0] | c[1] << 8 | c[2] << 16;
    REQUIRE_FALSE(seen[rgb]);
    seen[rgb] = true;
  }
  CHECK(false_color(424242) == false_color(424242));
}

TEST_CASE("annotation tiles are false-colored with transparent background") {
  auto e = test::memory_engine();
  e->create_dataset(test::dataset("ds", {256, 256, 16, 1}));
  e->create_project(test::annotation_project("ann", "ds"));
  auto ann = e->annotations("ann");
  AnnotationWrite w;
  w.object.id = 9;
  w.payload = VoxelList{{3, 4, 5, 0}};
  ann.write_annotation(w, {});
  const auto img = render_tile(ann.store(), {0, 5, 0, 0, TilePlane::kXY});
  REQUIRE(img.samples == 4);
  const auto c = false_color(9);
  for (std::uint64_t i = 0; i < 256 * 256; ++i) {
    const bool labeled = i == 4 * 256 + 3;
    for (unsigned k = 0; k < 4; ++k) REQUIRE(img.pixels[i * 4 + k] == (labeled ? c[k] : 0));
  }
}

TEST_CASE("png encoding round-trips gray and rgba images") {
  std::mt19937_64 rng(6);
  for (unsigned samples : {1u, 4u}) {
    Image img{37, 19, samples, {}};
    img.pixels.resize(std::size_t{37} * 19 * samples);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng());
    const auto png = png_encode(img);
    CHECK(png.substr(1, 3) == "PNG");
    CHECK(png_decode(png) == img);
  }
  CHECK_THROWS_AS(png_decode("definitely not a png"), Error);
}
