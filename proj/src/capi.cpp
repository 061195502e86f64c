#include "ocp/ocp.h"

#include <memory>
#include <mutex>
#include <string>
#include <utility>

#include "json.hpp"
#include "ocp/bench.hpp"
#include "ocp/engine.hpp"
#include "ocp/service.hpp"

struct ocp_engine {
  std::unique_ptr<ocp::Engine> engine;
  ocp::Service* service = nullptr;
  bool stop_pending = false;  // ocp_stop() arrived before ocp_serve()
  std::mutex service_mu;
};

struct ocp_buffer {
  std::string bytes;
};

namespace {

thread_local std::string last_error;

template <typename F>
ocp_status guarded(F&& body) {
  try {
    body();
    return OCP_OK;
  } catch (const ocp::Error& e) {
    last_error = e.what();
    return static_cast<ocp_status>(e.code());
  } catch (const std::exception& e) {
    last_error = e.what();
    return OCP_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) ocp::fail(ocp::ErrorCode::kInvalid, std::string(what) + " is null");
}

void give(ocp_buffer** out, std::string bytes) {
  if (out) *out = new ocp_buffer{std::move(bytes)};
}

std::string verify_json(const ocp::VerifyReport& r) {
  return nlohmann::json{{"objects", r.objects}, {"index_entries", r.index_entries}, {"cuboids", r.cuboids}}.dump();
}

}  // namespace

extern "C" {

const char* ocp_last_error(void) { return last_error.c_str(); }

const char* ocp_status_name(ocp_status status) {
  if (status == OCP_OK) return "ok";
  if (status == OCP_ERR_INTERNAL) return "internal";
  return ocp::error_code_name(static_cast<ocp::ErrorCode>(status)).data();
}

ocp_status ocp_open(const char* data_dir, const char* placement_file, uint64_t cache_bytes, ocp_engine** out) {
  return guarded([&] {
    require(out, "out");
    ocp::EngineOptions options;
    if (data_dir) options.data_dir = data_dir;
    if (placement_file) options.placement_file = placement_file;
    if (cache_bytes) options.cache_bytes = cache_bytes;
    auto handle = std::make_unique<ocp_engine>();
    handle->engine = std::make_unique<ocp::Engine>(options);
    *out = handle.release();
  });
}

void ocp_close(ocp_engine* engine) { delete engine; }

ocp_status ocp_create_dataset(ocp_engine* engine, const char* json) {
  return guarded([&] {
    require(engine, "engine");
    require(json, "json");
    engine->engine->create_dataset(ocp::dataset_from_json(json));
  });
}

ocp_status ocp_create_project(ocp_engine* engine, const char* json) {
  return guarded([&] {
    require(engine, "engine");
    require(json, "json");
    const auto p = ocp::project_from_json(json);
    engine->engine->create_project(p, ocp::placement_from_json(json, p));
  });
}

ocp_status ocp_describe(ocp_engine* engine, const char* kind, const char* name, ocp_buffer** out) {
  return guarded([&] {
    require(engine, "engine");
    require(kind, "kind");
    require(name, "name");
    const std::string k = kind;
    if (k != "dataset" && k != "project") ocp::fail(ocp::ErrorCode::kInvalid, "kind is dataset or project");
    ocp::Service service(*engine->engine);
    const auto res = service.handle({"GET", std::string("/admin/") + k + "s/" + name + "/", {}});
    if (res.status != 200) ocp::fail(res.status == 404 ? ocp::ErrorCode::kNotFound : ocp::ErrorCode::kInvalid, res.body);
    give(out, res.body);
  });
}

ocp_status ocp_request(ocp_engine* engine, const char* method, const char* target, const void* body, size_t body_len,
                       int* http_status, ocp_buffer** out) {
  return guarded([&] {
    require(engine, "engine");
    require(method, "method");
    require(target, "target");
    ocp::Service service(*engine->engine);
    const auto res =
        service.handle({method, target, body ? std::string(static_cast<const char*>(body), body_len) : std::string()});
    if (http_status) *http_status = res.status;
    give(out, res.body);
  });
}

ocp_status ocp_ingest(ocp_engine* engine, const char* token, const char* slice_dir) {
  return guarded([&] {
    require(engine, "engine");
    require(token, "token");
    require(slice_dir, "slice_dir");
    ocp::ingest_slices(*engine->engine, token, slice_dir);
  });
}

ocp_status ocp_build_pyramid(ocp_engine* engine, const char* token) {
  return guarded([&] {
    require(engine, "engine");
    require(token, "token");
    engine->engine->build_pyramid(token);
  });
}

ocp_status ocp_propagate(ocp_engine* engine, const char* token) {
  return guarded([&] {
    require(engine, "engine");
    require(token, "token");
    engine->engine->propagate(token);
  });
}

ocp_status ocp_synth_annotations(ocp_engine* engine, const char* token, const ocp_synth_options* options,
                                 ocp_buffer** report) {
  return guarded([&] {
    require(engine, "engine");
    require(token, "token");
    require(options, "options");
    ocp::SynthOptions o;
    o.synapses = options->synapses;
    o.dendrites = options->dendrites;
    o.seed = options->seed;
    o.batch = options->batch ? options->batch : 40;
    const auto r = ocp::synth_annotations(*engine->engine, token, o);
    give(report, nlohmann::json{{"synapses", r.synapse_ids},
                                {"dendrites", r.dendrite_ids},
                                {"max_dendrite_fill", r.max_dendrite_fill}}
                     .dump());
  });
}

ocp_status ocp_measure_cutout(ocp_engine* engine, const char* token, const ocp_cutout_bench* options, ocp_buffer** csv) {
  return guarded([&] {
    require(engine, "engine");
    require(token, "token");
    require(options, "options");
    ocp::CutoutBenchOptions o;
    o.mode = ocp::parse_cutout_mode(options->mode ? options->mode : "aligned");
    if (options->n_sizes) o.sizes_mb.assign(options->sizes_mb, options->sizes_mb + options->n_sizes);
    if (options->n_parallel) o.parallel.assign(options->parallel, options->parallel + options->n_parallel);
    if (options->requests) o.requests = options->requests;
    if (options->trials) o.trials = options->trials;
    if (options->seed) o.seed = options->seed;
    const auto rows = ocp::measure_cutout(*engine->engine, token, o);
    ocp::verify_project(*engine->engine, token);
    give(csv, ocp::cutout_csv(rows));
  });
}

ocp_status ocp_measure_write(ocp_engine* engine, const char* token, const ocp_write_bench* options, ocp_buffer** csv) {
  return guarded([&] {
    require(engine, "engine");
    require(token, "token");
    require(options, "options");
    ocp::WriteBenchOptions o;
    if (options->objects) o.objects = options->objects;
    if (options->batch) o.batch = options->batch;
    if (options->parallel) o.parallel = options->parallel;
    if (options->seed) o.seed = options->seed;
    const auto row = ocp::measure_write(*engine->engine, token, o);
    ocp::verify_project(*engine->engine, token);
    give(csv, ocp::write_csv({row}));
  });
}

ocp_status ocp_verify(ocp_engine* engine, const char* token, ocp_buffer** report) {
  return guarded([&] {
    require(engine, "engine");
    require(token, "token");
    give(report, verify_json(ocp::verify_project(*engine->engine, token)));
  });
}

ocp_status ocp_add_backend(ocp_engine* engine, const char* id, const char* kind, const char* path) {
  return guarded([&] {
    require(engine, "engine");
    require(id, "id");
    require(kind, "kind");
    auto& router = engine->engine->router();
    router.add_backend({id, kind, path ? path : ""});
    router.save();
  });
}

ocp_status ocp_migrate(ocp_engine* engine, const char* token, const char* from, const char* to) {
  return guarded([&] {
    require(engine, "engine");
    require(token, "token");
    require(from, "from");
    require(to, "to");
    engine->engine->migrate(token, from, to);
  });
}

ocp_status ocp_placement_report(ocp_engine* engine, const char* token, ocp_buffer** report) {
  return guarded([&] {
    require(engine, "engine");
    require(token, "token");
    engine->engine->project(token);
    auto rows = nlohmann::json::array();
    for (const auto& u : engine->engine->router().placement_report(token))
      rows.push_back({{"backend", u.backend}, {"keys", u.keys}, {"cuboids", u.cuboids}, {"bytes", u.bytes}});
    give(report, rows.dump());
  });
}

ocp_status ocp_serve(ocp_engine* engine, const char* host, int port, unsigned threads) {
  return guarded([&] {
    require(engine, "engine");
    ocp::Service service(*engine->engine);
    {
      std::lock_guard lock(engine->service_mu);
      engine->service = &service;
      if (std::exchange(engine->stop_pending, false)) service.stop();
    }
    try {
      service.serve(host ? host : "127.0.0.1", port, threads ? threads : 16);
    } catch (...) {
      std::lock_guard lock(engine->service_mu);
      engine->service = nullptr;
      throw;
    }
    std::lock_guard lock(engine->service_mu);
    engine->service = nullptr;
  });
}

void ocp_stop(ocp_engine* engine) {
  if (!engine) return;
  std::lock_guard lock(engine->service_mu);
  if (engine->service)
    engine->service->stop();
  else
    engine->stop_pending = true;
}

const uint8_t* ocp_buffer_data(const ocp_buffer* buffer) {
  return buffer ? reinterpret_cast<const uint8_t*>(buffer->bytes.data()) : nullptr;
}

size_t ocp_buffer_size(const ocp_buffer* buffer) { return buffer ? buffer->bytes.size() : 0; }

void ocp_buffer_free(ocp_buffer* buffer) { delete buffer; }

}  // extern "C"
