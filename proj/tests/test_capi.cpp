// Exercises the shared library through its C interface only.
#include <chrono>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "ocp/ocp.h"

using json = nlohmann::json;

namespace {

std::string take(ocp_buffer* b) {
  std::string s(reinterpret_cast<const char*>(ocp_buffer_data(b)), ocp_buffer_size(b));
  ocp_buffer_free(b);
  return s;
}

struct Request {
  int status = 0;
  std::string body;
};

Request request(ocp_engine* e, const char* method, const std::string& target, const std::string& body = {}) {
  Request r;
  ocp_buffer* out = nullptr;
  REQUIRE(ocp_request(e, method, target.c_str(), body.data(), body.size(), &r.status, &out) == OCP_OK);
  r.body = take(out);
  return r;
}

std::filesystem::path temp_dir() {
  std::mt19937_64 rng(std::random_device{}());
  auto p = std::filesystem::temp_directory_path() / ("ocp-capi-" + std::to_string(rng()));
  std::filesystem::create_directories(p);
  return p;
}

const char* kDataset = R"({"name":"ds","extent":[512,512,32],"levels":2})";
const char* kImage = R"({"token":"img","dataset":"ds"})";
const char* kAnn = R"({"token":"ann","dataset":"ds","type":"annotation","exceptions":true})";

}  // namespace

TEST_CASE("status names and error reporting") {
  CHECK(std::string(ocp_status_name(OCP_OK)) == "ok");
  CHECK(std::string(ocp_status_name(OCP_ERR_NOT_FOUND)) == "not-found");
  ocp_engine* e = nullptr;
  REQUIRE(ocp_open(nullptr, nullptr, 0, &e) == OCP_OK);
  CHECK(ocp_create_project(e, kImage) == OCP_ERR_NOT_FOUND);
  CHECK(std::string(ocp_last_error()).find("ds") != std::string::npos);
  CHECK(ocp_create_dataset(e, "{not json") == OCP_ERR_INVALID);
  CHECK(ocp_create_dataset(nullptr, kDataset) == OCP_ERR_INVALID);
  CHECK(ocp_create_dataset(e, kDataset) == OCP_OK);
  CHECK(ocp_create_dataset(e, kDataset) == OCP_ERR_CONFLICT);
  ocp_buffer* out = nullptr;
  CHECK(ocp_describe(e, "widget", "ds", &out) == OCP_ERR_INVALID);
  CHECK(ocp_open(nullptr, nullptr, 0, nullptr) == OCP_ERR_INVALID);
  ocp_close(e);
  ocp_close(nullptr);
  ocp_buffer_free(nullptr);
}

TEST_CASE("requests round-trip volumes and annotations in process") {
  ocp_engine* e = nullptr;
  REQUIRE(ocp_open("", nullptr, 0, &e) == OCP_OK);
  REQUIRE(ocp_create_dataset(e, kDataset) == OCP_OK);
  REQUIRE(ocp_create_project(e, kImage) == OCP_OK);
  REQUIRE(ocp_create_project(e, kAnn) == OCP_OK);
  ocp_buffer* out = nullptr;
  REQUIRE(ocp_describe(e, "project", "ann", &out) == OCP_OK);
  CHECK(json::parse(take(out))["exceptions"] == true);

  const auto put = request(e, "PUT", "/ann/", R"({"type":"synapse","voxels":[[1,2,3],[400,400,20]]})");
  CHECK(put.status == 200);
  CHECK(put.body == "1");
  CHECK(request(e, "GET", "/ann/1/").status == 200);
  CHECK(request(e, "GET", "/ann/2/").status == 404);
  CHECK(request(e, "GET", "/img/cutout/0/0,1/0,1/0,1/").body.size() == 4 + 4 + 12 + 12 + 8 + 1);

  REQUIRE(ocp_propagate(e, "ann") == OCP_OK);
  REQUIRE(ocp_verify(e, "ann", &out) == OCP_OK);
  const auto report = json::parse(take(out));
  CHECK(report["objects"] == 1);
  CHECK(report["index_entries"].get<int>() >= 2);
  CHECK(ocp_propagate(e, "img") == OCP_ERR_INVALID);

  ocp_synth_options synth{20, 1, 5, 10};
  REQUIRE(ocp_synth_annotations(e, "ann", &synth, &out) == OCP_OK);
  const auto made = json::parse(take(out));
  CHECK(made["synapses"].size() == 20);
  CHECK(made["max_dendrite_fill"].get<double>() <= 0.004);

  ocp_write_bench wb{40, 40, 1, 3};
  REQUIRE(ocp_measure_write(e, "ann", &wb, &out) == OCP_OK);
  CHECK(take(out).rfind("batch,parallel,objects", 0) == 0);

  const std::uint32_t sizes[] = {1}, parallel[] = {1, 2};
  ocp_cutout_bench cb{"aligned", sizes, 1, parallel, 2, 2, 1, 7};
  REQUIRE(ocp_measure_cutout(e, "img", &cb, &out) == OCP_OK);
  CHECK(std::count(ocp_buffer_data(out), ocp_buffer_data(out) + ocp_buffer_size(out), '\n') == 3);
  ocp_buffer_free(out);
  cb.mode = "sideways";
  CHECK(ocp_measure_cutout(e, "img", &cb, &out) == OCP_ERR_INVALID);
  ocp_close(e);
}

TEST_CASE("data and placement persist across reopen and migration") {
  const auto dir = temp_dir();
  ocp_engine* e = nullptr;
  REQUIRE(ocp_open(dir.c_str(), nullptr, 0, &e) == OCP_OK);
  REQUIRE(ocp_create_dataset(e, kDataset) == OCP_OK);
  REQUIRE(ocp_create_project(e, kAnn) == OCP_OK);
  REQUIRE(request(e, "PUT", "/ann/", R"({"id":7,"voxels":[[5,5,5],[300,300,30]]})").status == 200);
  const auto voxels = request(e, "GET", "/ann/7/voxels/").body;
  REQUIRE(ocp_add_backend(e, "bulk", "sqlite", "bulk.db") == OCP_OK);
  CHECK(ocp_add_backend(e, "bulk", "memory", nullptr) == OCP_ERR_CONFLICT);
  CHECK(ocp_migrate(e, "ann", "default", "nowhere") == OCP_ERR_NOT_FOUND);
  REQUIRE(ocp_migrate(e, "ann", "default", "bulk") == OCP_OK);
  ocp_close(e);

  REQUIRE(ocp_open(dir.c_str(), nullptr, 0, &e) == OCP_OK);
  CHECK(request(e, "GET", "/ann/7/voxels/").body == voxels);
  ocp_buffer* out = nullptr;
  REQUIRE(ocp_placement_report(e, "ann", &out) == OCP_OK);
  const auto report = json::parse(take(out));
  REQUIRE(report.size() == 1);
  CHECK(report[0]["backend"] == "bulk");
  CHECK(report[0]["cuboids"] == 2);
  ocp_close(e);
  std::filesystem::remove_all(dir);
}

TEST_CASE("the HTTP server answers until stopped") {
  ocp_engine* e = nullptr;
  REQUIRE(ocp_open(nullptr, nullptr, 0, &e) == OCP_OK);
  REQUIRE(ocp_create_dataset(e, kDataset) == OCP_OK);
  REQUIRE(ocp_create_project(e, kImage) == OCP_OK);
  const int port = 20000 + static_cast<int>(std::random_device{}() % 20000);
  ocp_status served = OCP_ERR_INTERNAL;
  std::thread server([&] { served = ocp_serve(e, "127.0.0.1", port, 4); });

  httplib::Client client("127.0.0.1", port);
  httplib::Result res;
  for (int i = 0; i < 200 && !res; ++i) {
    res = client.Get("/img/cutout/0/0,4/0,4/0,4/");
    if (!res) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body.substr(0, 4) == "OCPB");
  CHECK(client.Get("/img/cutout/0/4,4/0,4/0,4/")->status == 400);
  CHECK(client.Get("/nosuch/1/")->status == 404);
  const auto put = client.Put("/admin/projects/img2/", R"({"dataset":"ds"})", "application/json");
  CHECK(put->status == 201);

  ocp_stop(e);
  server.join();
  CHECK(served == OCP_OK);
  ocp_close(e);
}
