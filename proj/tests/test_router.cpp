#include <fstream>
#include <map>
#include <random>

#include "doctest.h"
#include "ocp/keys.hpp"
#include "ocp/router.hpp"
#include "ocp/store.hpp"
#include "support.hpp"

using namespace ocp;

namespace {

std::map<std::string, std::string> dump(Backend& b, const std::string& project) {
  std::map<std::string, std::string> out;
  b.scan_prefix(keys::project_prefix(project), [&](std::string_view k, std::string_view v) {
    out.emplace(k, v);
    return true;
  });
  return out;
}

std::map<std::string, std::string> dump_all(Engine& e, const std::string& project) {
  std::map<std::string, std::string> out;
  for (const auto& id : e.router().backend_ids()) {
    auto part = dump(e.router().backend(id).inner(), project);
    out.insert(part.begin(), part.end());
  }
  return out;
}

struct Populated {
  std::unique_ptr<Engine> engine = test::memory_engine();
  DenseVolume before;
  Box box = make_box(0, 512, 0, 512, 0, 32);
};

Populated populate(std::optional<Placement> placement, const std::vector<std::string>& backends) {
  Populated p;
  for (const auto& id : backends) p.engine->router().add_backend({id, "memory", {}});
  p.engine->create_dataset(test::dataset("ds", {512, 512, 32, 1}));
  p.engine->create_project(test::image_project("img", "ds"), placement);
  std::mt19937_64 rng(5);
  auto store = p.engine->store("img");
  const auto vol = test::random_volume(VoxelType::kUint8, p.box, rng);
  store.write_cutout(0, {p.box, {}}, vol);
  p.before = store.read_cutout(0, {p.box, {}});
  return p;
}

}  // namespace

TEST_CASE("sharded placement routes by contiguous key ranges") {
  auto e = test::memory_engine();
  for (const char* id : {"a", "b", "c", "d"}) e->router().add_backend({id, "memory", {}});
  e->create_dataset(test::dataset("ds", {512, 512, 64, 1}));  // 4x4x4 grid: 64 cells
  Placement p{"img", ProjectType::kImage, 4, {"a", "b", "c", "d"}, false, {}};
  e->create_project(test::image_project("img", "ds"), p);
  const auto store = e->store("img");
  auto& router = e->router();
  for (std::uint64_t k = 0; k < 64; ++k) {
    auto& b = router.route(store.key(0, 0, k));
    CHECK(&b == &router.backend(std::string(1, static_cast<char>('a' + k / 16))));
    CHECK(&b == &router.route(store.key(0, 0, k)));  // deterministic
  }
  CHECK(&router.home("img") == &router.backend("a"));
}

TEST_CASE("an aligned block inside one shard touches one backend") {
  auto e = test::memory_engine();
  for (const char* id : {"a", "b"}) e->router().add_backend({id, "memory", {}});
  e->create_dataset(test::dataset("ds", {512, 512, 64, 1}));
  e->create_project(test::image_project("img", "ds"), Placement{"img", ProjectType::kImage, 2, {"a", "b"}, false, {}});
  auto store = e->store("img");
  std::mt19937_64 rng(1);
  const auto full = make_box(0, 512, 0, 512, 0, 64);
  store.write_cutout(0, {full, {}}, test::random_volume(VoxelType::kUint8, full, rng));
  e->cache().clear();
  e->router().backend("a").reset();
  e->router().backend("b").reset();
  store.read_cutout(0, {make_box(256, 512, 256, 512, 32, 64), {}});  // grid block (2..4)^3, keys 56..63
  CHECK(e->router().backend("a").total().read_calls == 0);
  CHECK(e->router().backend("b").total().read_calls > 0);
}

TEST_CASE("placement file round-trips") {
  test::TempDir dir;
  const auto file = dir.path() / "placement.conf";
  {
    Router r(file);
    r.add_backend({"bulk", "sqlite", "bulk.db"});
    r.add_backend({"fast", "memory", {}});
    r.set_placement({"img", ProjectType::kImage, 1, {"bulk"}, false, {}});
    r.set_placement({"ann", ProjectType::kAnnotation, 1, {"bulk"}, true, "fast"});
    r.save();
  }
  CHECK(std::filesystem::exists(dir.path() / "bulk.db"));
  Router r(file);
  r.load();
  CHECK(r.backend_ids() == std::vector<std::string>{"bulk", "fast"});
  CHECK(*r.placement("ann") == Placement{"ann", ProjectType::kAnnotation, 1, {"bulk"}, true, "fast"});
  CHECK(r.backends_of("ann") == std::vector<std::string>{"bulk", "fast"});
  CHECK(&r.home("ann") == &r.backend("fast"));
}

TEST_CASE("bad placement files are configuration errors") {
  test::TempDir dir;
  const auto file = dir.path() / "placement.conf";
  auto load = [&](const std::string& text) {
    std::ofstream(file) << text;
    Router r(file);
    try {
      r.load();
      return false;
    } catch (const Error& e) {
      return e.code() == ErrorCode::kConfig;
    }
  };
  CHECK(load("frobnicate x\n"));
  CHECK(load("backend a tape\n"));
  CHECK(load("backend a memory\nproject p type=image shards=2 backends=a\n"));
  CHECK(load("project p type=image shards=1 backends=missing\n"));
  CHECK(load("backend a memory\nproject p type=image shards=1 backends=a colour=red\n"));
  CHECK_FALSE(load("# comment only\nbackend a memory  # trailing\n"));
}

TEST_CASE("migration preserves every key and value") {
  auto p = populate(std::nullopt, {"bulk"});
  const auto keys_before = dump_all(*p.engine, "img");
  REQUIRE_FALSE(keys_before.empty());
  p.engine->migrate("img", "default", "bulk");
  CHECK(dump(p.engine->router().backend("bulk").inner(), "img") == keys_before);
  CHECK(dump(p.engine->router().backend("default").inner(), "img").empty());
  CHECK(p.engine->store("img").read_cutout(0, {p.box, {}}) == p.before);
  CHECK(p.engine->router().placement("img")->backends == std::vector<std::string>{"bulk"});
}

TEST_CASE("failure before the placement switch keeps serving from the source") {
  auto p = populate(std::nullopt, {"bulk"});
  const auto keys_before = dump_all(*p.engine, "img");
  CHECK_THROWS_AS(p.engine->migrate("img", "default", "bulk", MigrationFault::kAfterCopy), Error);
  CHECK(p.engine->router().placement("img")->backends == std::vector<std::string>{"default"});
  CHECK(dump(p.engine->router().backend("default").inner(), "img") == keys_before);
  p.engine->cache().clear();
  CHECK(p.engine->store("img").read_cutout(0, {p.box, {}}) == p.before);
  // A retry completes and leaves no stray copy behind.
  p.engine->migrate("img", "default", "bulk");
  CHECK(dump(p.engine->router().backend("bulk").inner(), "img") == keys_before);
  CHECK(dump(p.engine->router().backend("default").inner(), "img").empty());
}

TEST_CASE("failure after the switch loses nothing") {
  auto p = populate(std::nullopt, {"bulk"});
  const auto keys_before = dump_all(*p.engine, "img");
  CHECK_THROWS_AS(p.engine->migrate("img", "default", "bulk", MigrationFault::kAfterSwitch), Error);
  CHECK(p.engine->router().placement("img")->backends == std::vector<std::string>{"bulk"});
  CHECK(dump(p.engine->router().backend("bulk").inner(), "img") == keys_before);
  CHECK(p.engine->store("img").read_cutout(0, {p.box, {}}) == p.before);
}

TEST_CASE("migrating one shard moves only that shard's keys") {
  auto p = populate(Placement{"img", ProjectType::kImage, 2, {"a", "b"}, false, {}}, {"a", "b", "c"});
  auto& r = p.engine->router();
  const auto on_b = dump(r.backend("b").inner(), "img");
  const auto on_a = dump(r.backend("a").inner(), "img");
  REQUIRE_FALSE(on_b.empty());
  p.engine->migrate("img", "b", "c");
  CHECK(dump(r.backend("c").inner(), "img") == on_b);
  CHECK(dump(r.backend("a").inner(), "img") == on_a);
  CHECK(r.placement("img")->backends == std::vector<std::string>{"a", "c"});
  CHECK(p.engine->store("img").read_cutout(0, {p.box, {}}) == p.before);
}

TEST_CASE("migrating an empty project only switches placement") {
  auto e = test::memory_engine();
  e->router().add_backend({"bulk", "memory", {}});
  e->create_dataset(test::dataset("ds", {64, 64, 64, 1}));
  e->create_project(test::image_project("img", "ds"));
  e->migrate("img", "default", "bulk");
  CHECK(e->router().placement("img")->backends == std::vector<std::string>{"bulk"});
  CHECK(dump(e->router().backend("bulk").inner(), "img").empty());
  CHECK_THROWS_AS(e->migrate("img", "default", "bulk"), Error);  // no longer placed there
}

TEST_CASE("leaving the fast-write backend settles the project on bulk storage") {
  auto e = test::memory_engine();
  e->router().add_backend({"bulk", "memory", {}});
  e->router().add_backend({"fast", "memory", {}});
  e->create_dataset(test::dataset("ds", {256, 256, 32, 1}));
  e->create_project(test::annotation_project("ann", "ds"),
                    Placement{"ann", ProjectType::kAnnotation, 1, {"bulk"}, true, "fast"});
  auto ann = e->annotations("ann");
  AnnotationWrite w;
  w.payload = VoxelList{{1, 2, 3, 0}, {200, 200, 20, 0}};
  const auto id = ann.write_annotation(w, {});
  CHECK(dump(e->router().backend("bulk").inner(), "ann").empty());
  e->migrate("ann", "fast", "bulk");
  const auto p = e->router().placement("ann");
  CHECK_FALSE(p->active_write);
  CHECK(p->backends == std::vector<std::string>{"bulk"});
  CHECK(e->annotations("ann").object_voxels(id, 0).size() == 2);
  CHECK(dump(e->router().backend("fast").inner(), "ann").empty());
}

TEST_CASE("placement report counts stored keys per backend") {
  auto e = test::memory_engine();
  for (const char* id : {"a", "b"}) e->router().add_backend({id, "memory", {}});
  e->create_dataset(test::dataset("ds", {512, 512, 64, 1}));
  e->create_project(test::image_project("img", "ds"), Placement{"img", ProjectType::kImage, 2, {"a", "b"}, false, {}});
  auto empty = e->router().placement_report("img");
  REQUIRE(empty.size() == 2);
  CHECK(empty[0].keys + empty[1].keys == 0);

  auto store = e->store("img");
  std::mt19937_64 rng(2);
  const auto box = make_box(0, 512, 0, 256, 0, 64);  // 32 cuboids
  store.write_cutout(0, {box, {}}, test::random_volume(VoxelType::kUint8, box, rng));
  const auto report = e->router().placement_report("img");
  CHECK(report[0].cuboids + report[1].cuboids == 32);
  CHECK(report[0].cuboids > 0);
  CHECK(report[1].cuboids > 0);
}
