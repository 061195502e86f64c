#include <random>

#include "doctest.h"
#include "json.hpp"
#include "ocp/keys.hpp"
#include "ocp/service.hpp"
#include "ocp/wire.hpp"
#include "support.hpp"

using namespace ocp;
using json = nlohmann::json;

namespace {

struct Fixture {
  std::unique_ptr<Engine> engine = test::memory_engine();
  Service service{*engine};

  Fixture() {
    engine->create_dataset(test::dataset("ds", {1024, 1024, 64, 1}, 3));
    engine->create_project(test::image_project("img", "ds"));
    auto ann = test::annotation_project("ann", "ds");
    engine->create_project(ann);
    ann.token = "plain";
    ann.exceptions = false;
    engine->create_project(ann);
    auto ro = test::annotation_project("frozen", "ds");
    ro.read_only = true;
    engine->create_project(ro);
  }

  HttpResponse get(const std::string& target) { return service.handle({"GET", target, {}}); }
  HttpResponse put(const std::string& target, const std::string& body) { return service.handle({"PUT", target, body}); }
};

std::string synapse_json(std::uint32_t id, double confidence, const std::vector<std::array<int, 3>>& voxels) {
  json j{{"type", "synapse"}, {"confidence", confidence}, {"voxels", json::array()}};
  if (id) j["id"] = id;
  for (const auto& v : voxels) j["voxels"].push_back(v);
  return j.dump();
}

}  // namespace

TEST_CASE("canonical URLs parse and re-render unchanged") {
  const std::pair<const char*, const char*> urls[] = {
      {"GET", "/bock11/hdf5/4/512,1024/512,1024/512,1024/"},
      {"GET", "/bock11/cutout/4/512,1024/512,1024/512,1024/"},
      {"GET", "/bock11/cutout/0/0,10/0,10/0,10/3,5/?channels=0,2"},
      {"GET", "/annoproj/75/"},
      {"GET", "/annoproj/75/voxels/"},
      {"GET", "/annoproj/75/voxels/2/"},
      {"GET", "/annoproj/75/boundingbox/"},
      {"GET", "/annoproj/75/cutout/"},
      {"GET", "/annoproj/75/cutout/2/1000,2000/1000,2000/10,20/"},
      {"GET", "/annoproj/objects/type/synapse/"},
      {"GET", "/annoproj/objects/type/synapse/confidence/geq/0.99/"},
      {"GET", "/annoproj/objects/status/lt/3/kv/tracer/a%20b/"},
      {"GET", "/annproj/1000,1001,1002/"},
      {"GET", "/annproj/1000,1001,1002/boundingbox/"},
      {"PUT", "/annoproj/"},
      {"PUT", "/annoproj/?discipline=exception&update&dataonly"},
      {"DELETE", "/annoproj/75/"},
      {"GET", "/admin/datasets/bock11/"},
      {"PUT", "/admin/projects/annoproj/"},
      {"GET", "/tiles/bock11/2/40/3_4.png"},
      {"GET", "/tiles/bock11/2/40/3_4.png?plane=xz&channel=1"},
  };
  for (const auto& [method, url] : urls) {
    CAPTURE(url);
    const Route r = parse_route(method, url);
    CHECK(render_route(r) == url);
    CHECK(parse_route(method, render_route(r)) == r);
  }
}

TEST_CASE("equivalent URL spellings parse to the same route") {
  CHECK(parse_route("PUT", "/p/preserve/update/") == parse_route("PUT", "/p/?discipline=preserve&update"));
  CHECK(parse_route("GET", "/p/cutout/1/0,5/0,5/0,5") == parse_route("GET", "/p/cutout/1/0,5/0,5/0,5/"));
  const auto r = parse_route("GET", "/p/objects/type/synapse/confidence/geq/0.99/");
  REQUIRE(r.predicates.size() == 2);
  CHECK(r.predicates[1].op == CompareOp::kGeq);
  CHECK(r.predicates[1].value == "0.99");
  CHECK(r.predicates[0].op == CompareOp::kEq);
}

TEST_CASE("malformed and unknown URLs map to client errors") {
  auto code = [](const char* method, const char* url) {
    try {
      parse_route(method, url);
      return ErrorCode{};
    } catch (const Error& e) {
      return e.code();
    }
  };
  CHECK(code("GET", "/p/cutout/0/5,5/0,1/0,1/") == ErrorCode::kInvalid);
  CHECK(code("GET", "/p/cutout/0/0,1/0,1/") == ErrorCode::kInvalid);
  CHECK(code("GET", "/p/cutout/0/0,x/0,1/0,1/") == ErrorCode::kInvalid);
  CHECK(code("GET", "/p/cutout/0/0,1/0,1/0,1/0,1/0,1/") == ErrorCode::kInvalid);
  CHECK(code("GET", "/p/75/frobnicate/") == ErrorCode::kInvalid);
  CHECK(code("GET", "/p/1,,2/") == ErrorCode::kInvalid);
  CHECK(code("PUT", "/p/?discipline=clobber") == ErrorCode::kInvalid);
  CHECK(code("GET", "/tiles/p/0/0/1-2.png") == ErrorCode::kInvalid);
  CHECK(code("GET", "/tiles/p/0/0/1_2.png?plane=xw") == ErrorCode::kInvalid);
  CHECK(code("GET", "/") == ErrorCode::kNotFound);
  CHECK(code("GET", "/admin/widgets/x/") == ErrorCode::kNotFound);
  CHECK(code("PATCH", "/p/1/") == ErrorCode::kNotFound);
}

TEST_CASE("error codes map to HTTP statuses") {
  CHECK(http_status(ErrorCode::kNotFound) == 404);
  CHECK(http_status(ErrorCode::kInvalid) == 400);
  CHECK(http_status(ErrorCode::kBounds) == 416);
  CHECK(http_status(ErrorCode::kConflict) == 409);
  CHECK(http_status(ErrorCode::kLocked) == 409);
  CHECK(http_status(ErrorCode::kPermission) == 403);
  CHECK(http_status(ErrorCode::kIntegrity) == 500);
}

TEST_CASE("cutout bodies equal the library read byte for byte") {
  Fixture f;
  std::mt19937_64 rng(12);
  auto store = f.engine->store("img");
  const auto box = make_box(100, 400, 50, 300, 3, 40);
  store.write_cutout(0, {box, {}}, test::random_volume(VoxelType::kUint8, box, rng));
  const auto res = f.get("/img/cutout/0/90,410/40,310/0,64/");
  REQUIRE(res.status == 200);
  const auto lib = store.read_cutout(0, {make_box(90, 410, 40, 310, 0, 64), {}});
  CHECK(res.body == encode_ocpb(lib));
  CHECK(decode_ocpb(res.body) == lib);
  CHECK(f.get("/img/hdf5/0/90,410/40,310/0,64/").body == res.body);

  const auto blank = f.get("/img/cutout/1/0,16/0,16/0,4/");
  CHECK(blank.status == 200);
  const auto zero = decode_ocpb(blank.body);
  CHECK(std::all_of(zero.data.begin(), zero.data.end(), [](std::byte b) { return b == std::byte{0}; }));

  CHECK(f.get("/img/cutout/0/5,5/0,1/0,1/").status == 400);
  CHECK(f.get("/img/cutout/0/2000,3000/0,1/0,1/").status == 416);
  CHECK(f.get("/img/cutout/9/0,1/0,1/0,1/").status == 404);
  CHECK(f.get("/nosuch/cutout/0/0,1/0,1/0,1/").status == 404);
}

TEST_CASE("independent reads are stateless") {
  Fixture f;
  std::mt19937_64 rng(13);
  auto store = f.engine->store("img");
  const auto box = make_box(0, 512, 0, 512, 0, 32);
  store.write_cutout(0, {box, {}}, test::random_volume(VoxelType::kUint8, box, rng));
  REQUIRE(f.put("/ann/", synapse_json(0, 0.9, {{1, 2, 3}, {300, 300, 30}})).status == 200);
  const std::vector<std::string> urls{"/img/cutout/0/0,300/0,200/0,20/", "/img/cutout/1/10,200/10,200/5,25/",
                                      "/ann/1/", "/ann/1/voxels/", "/ann/1/boundingbox/",
                                      "/ann/objects/type/synapse/", "/tiles/img/0/4/0_1.png", "/nosuch/1/"};
  std::map<std::string, HttpResponse> first;
  for (const auto& u : urls) first[u] = f.get(u);
  for (int round = 0; round < 6; ++round) {
    auto perm = urls;
    std::shuffle(perm.begin(), perm.end(), rng);
    if (round % 2) f.engine->cache().clear();
    for (const auto& u : perm) {
      const auto res = f.get(u);
      CHECK(res.status == first[u].status);
      CHECK(res.body == first[u].body);
    }
  }
}

TEST_CASE("object endpoints serve metadata, voxels, boxes and cutouts") {
  Fixture f;
  const auto put = f.put("/ann/", synapse_json(75, 0.5, {{300, 300, 30}, {1, 2, 3}, {2, 2, 3}}));
  REQUIRE(put.status == 200);
  CHECK(put.body == "75");
  auto ann = f.engine->annotations("ann");

  const auto meta = f.get("/ann/75/");
  CHECK(meta.status == 200);
  CHECK(meta.body == to_json(ann.object(75)));
  CHECK(json::parse(meta.body)["type"] == "synapse");

  const auto voxels = f.get("/ann/75/voxels/");
  CHECK(decode_voxel_list(voxels.body) == VoxelList{{1, 2, 3, 0}, {2, 2, 3, 0}, {300, 300, 30, 0}});

  f.engine->router().backend("default").reset();
  const auto bbox = f.get("/ann/75/boundingbox/");
  CHECK(f.engine->router().backend("default").counters(keys::Kind::kCuboid).read_calls == 0);
  CHECK(bbox.body == box_to_json(ann.object_bounding_box(75, 0), 3));
  CHECK(json::parse(bbox.body)["hi"][0] == 384);

  const auto cut = decode_ocpb(f.get("/ann/75/cutout/0/0,10/0,10/0,10/").body);
  CHECK(cut == ann.object_cutout(75, 0, make_box(0, 10, 0, 10, 0, 10)));
  CHECK(decode_ocpb(f.get("/ann/75/cutout/").body) == ann.object_cutout(75, 0));

  CHECK(decode_voxel_list(f.get("/ann/75/voxels/1/").body).empty());  // not yet propagated
  CHECK(f.get("/ann/76/").status == 404);
  CHECK(f.get("/ann/76/voxels/").status == 404);
  CHECK(f.get("/ann/75/voxels/7/").status == 404);
}

TEST_CASE("batch reads return one record per id or fail as a whole") {
  Fixture f;
  for (std::uint32_t id : {1000, 1001, 1002})
    REQUIRE(f.put("/ann/", synapse_json(id, 0.1 * (id - 999), {{static_cast<int>(id - 990), 5, 5}})).status == 200);
  auto ann = f.engine->annotations("ann");

  const auto res = f.get("/ann/1000,1001,1002/");
  REQUIRE(res.status == 200);
  const auto records = decode_records(res.body);
  REQUIRE(records.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(records[i].metadata == to_json(ann.object(1000 + i)));
    CHECK(records[i].kind == PayloadKind::kNone);
  }

  const auto voxels = decode_records(f.get("/ann/1002,1000/voxels/").body);
  REQUIRE(voxels.size() == 2);
  CHECK(decode_voxel_list(voxels[0].payload) == VoxelList{{12, 5, 5, 0}});
  CHECK(decode_voxel_list(voxels[1].payload) == VoxelList{{10, 5, 5, 0}});

  const auto boxes = json::parse(f.get("/ann/1000,1001/boundingbox/").body);
  CHECK(boxes.size() == 2);
  CHECK(boxes["1001"].dump() == box_to_json(ann.object_bounding_box(1001, 0), 3));

  CHECK(f.get("/ann/1000/").body == records[0].metadata);  // a single id is not a batch
  CHECK(f.get("/ann/1000,4242,1002/").status == 404);
}

TEST_CASE("metadata queries return id lists") {
  Fixture f;
  REQUIRE(f.put("/ann/", synapse_json(1, 0.995, {})).status == 200);
  REQUIRE(f.put("/ann/", synapse_json(2, 0.5, {})).status == 200);
  REQUIRE(f.put("/ann/", R"({"id":3,"type":"seed","confidence":0.999,"kv":{"tracer":"a b"}})").status == 200);
  CHECK(f.get("/ann/objects/type/synapse/").body == "1,2");
  CHECK(f.get("/ann/objects/type/synapse/confidence/geq/0.99/").body == "1");
  CHECK(f.get("/ann/objects/kv/tracer/a%20b/").body == "3");
  const auto none = f.get("/ann/objects/type/neuron/");
  CHECK(none.status == 200);
  CHECK(none.body.empty());
  CHECK(f.get("/ann/objects/colour/red/").status == 400);
  CHECK(f.get("/ann/objects/type/").status == 400);
}

TEST_CASE("writes assign ids in body order and honour options") {
  Fixture f;
  json many = json::array();
  for (int i = 0; i < 40; ++i) many.push_back(json::parse(synapse_json(0, 0.5, {{i, i, i % 64}})));
  const auto res = f.put("/ann/", many.dump());
  REQUIRE(res.status == 200);
  std::vector<std::string> ids;
  for (std::size_t at = 0, next; at <= res.body.size(); at = next + 1) {
    next = res.body.find(',', at);
    if (next == std::string::npos) next = res.body.size();
    ids.push_back(res.body.substr(at, next - at));
  }
  REQUIRE(ids.size() == 40);
  for (int i = 0; i < 40; ++i) CHECK(ids[i] == std::to_string(i + 1));
  auto ann = f.engine->annotations("ann");
  CHECK(ann.object_voxels(17, 0) == VoxelList{{16, 16, 16, 0}});

  // The same batch framed as OCPA records.
  std::vector<AnnotationRecord> recs;
  for (int i = 0; i < 3; ++i) {
    AnnotationObject o;
    o.type = ObjectType::kSegment;
    recs.push_back({to_json(o), PayloadKind::kVoxels, 0, encode_voxel_list({{500u + i, 7, 7, 0}}, 3)});
  }
  CHECK(f.put("/ann/", encode_records(recs)).body == "41,42,43");
  CHECK(ann.object_voxels(42, 0) == VoxelList{{501, 7, 7, 0}});

  CHECK(f.put("/ann/?update", synapse_json(999, 0.5, {})).status == 404);
  CHECK(f.put("/ann/?update", synapse_json(1, 0.25, {})).status == 200);
  CHECK(ann.object(1).confidence == 0.25);
  CHECK(f.put("/ann/?dataonly", synapse_json(1, 0.75, {{9, 9, 9}})).status == 200);
  CHECK(ann.object(1).confidence == 0.25);
  CHECK(ann.object_voxels(1, 0).size() == 2);

  CHECK(f.put("/plain/?discipline=exception", synapse_json(0, 1, {{1, 1, 1}})).status == 409);
  CHECK(f.put("/frozen/", synapse_json(0, 1, {{1, 1, 1}})).status == 403);
  CHECK(f.put("/ann/", "").status == 400);
  CHECK(f.put("/ann/", "not json").status == 400);
  CHECK(f.put("/ann/", R"({"type":"spaceship"})").status == 400);
  CHECK(f.put("/ann/", R"({"voxels":[[1,2]]})").status == 400);
  CHECK(f.put("/ann/", synapse_json(0, 1, {{5000, 1, 1}})).status == 416);
  CHECK(ann.all_ids().size() == 43);  // failed writes left nothing behind
}

TEST_CASE("write disciplines reach the store through the URL") {
  Fixture f;
  REQUIRE(f.put("/ann/", synapse_json(1, 1, {{4, 4, 4}})).status == 200);
  REQUIRE(f.put("/ann/?discipline=preserve", synapse_json(2, 1, {{4, 4, 4}})).status == 200);
  CHECK(decode_voxel_list(f.get("/ann/2/voxels/").body).empty());
  REQUIRE(f.put("/ann/exception/", synapse_json(3, 1, {{4, 4, 4}})).status == 200);
  CHECK(decode_voxel_list(f.get("/ann/3/voxels/").body) == VoxelList{{4, 4, 4, 0}});
  CHECK(decode_voxel_list(f.get("/ann/1/voxels/").body) == VoxelList{{4, 4, 4, 0}});
  REQUIRE(f.put("/ann/", synapse_json(2, 1, {{4, 4, 4}})).status == 200);
  CHECK(decode_ocpb(f.get("/ann/cutout/0/4,5/4,5/4,5/").body).label_at(0) == 2);
}

TEST_CASE("delete removes an object and its voxels") {
  Fixture f;
  REQUIRE(f.put("/ann/", synapse_json(5, 1, {{1, 1, 1}, {600, 600, 60}})).status == 200);
  CHECK(f.service.handle({"DELETE", "/ann/5/", {}}).status == 200);
  CHECK(f.get("/ann/5/").status == 404);
  CHECK(decode_ocpb(f.get("/ann/cutout/0/600,601/600,601/60,61/").body).label_at(0) == 0);
  CHECK(f.service.handle({"DELETE", "/ann/5/", {}}).status == 404);
  CHECK(f.service.handle({"DELETE", "/frozen/5/", {}}).status == 403);
}

TEST_CASE("admin creates and describes datasets and projects") {
  Fixture f;
  const auto ds = f.put("/admin/datasets/kasthuri/", R"({"extent":[2048,2048,128],"levels":3})");
  REQUIRE(ds.status == 201);
  const auto desc = json::parse(f.get("/admin/datasets/kasthuri/").body);
  CHECK(desc["extent"] == json::array({2048, 2048, 128, 1}));
  CHECK(desc["levels"] == 3);
  CHECK(desc["resolutions"].size() == 3);
  CHECK(desc["resolutions"][2]["extent"][0] == 512);
  CHECK(f.get("/admin/datasets/kasthuri/").body == ds.body);

  const auto p = f.put("/admin/projects/kann/",
                       R"({"dataset":"kasthuri","type":"annotation","exceptions":true,"read_only":false})");
  REQUIRE(p.status == 201);
  const auto pj = json::parse(p.body);
  CHECK(pj["voxel_type"] == "label32");
  CHECK(pj["exceptions"] == true);
  CHECK(pj["placement"]["backends"] == json::array({"default"}));
  CHECK(f.engine->project("kann").exceptions);
  CHECK(f.get("/admin/projects/kann/").body == p.body);

  CHECK(f.put("/admin/projects/kann/", R"({"dataset":"kasthuri"})").status == 409);
  CHECK(f.put("/admin/datasets/kasthuri/", R"({"extent":[8,8,8]})").status == 409);
  CHECK(f.put("/admin/projects/orphan/", R"({"dataset":"missing"})").status == 404);
  CHECK(f.put("/admin/projects/x/", R"({"token":"y","dataset":"ds"})").status == 400);
  CHECK(f.put("/admin/projects/x/", "[1]").status == 400);
  CHECK(f.get("/admin/projects/nosuch/").status == 404);
}

TEST_CASE("tiles are served as PNG") {
  Fixture f;
  const auto res = f.get("/tiles/img/0/3/1_2.png?plane=xz");
  REQUIRE(res.status == 200);
  CHECK(res.content_type == "image/png");
  const auto img = png_decode(res.body);
  CHECK(img.width == 256);
  CHECK(img.samples == 1);
  CHECK(f.get("/tiles/nosuch/0/0/0_0.png").status == 404);
}
