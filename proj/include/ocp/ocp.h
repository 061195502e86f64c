/* C interface to the volumetric database engine.
 *
 * Handles are opaque. Every call returns an ocp_status; on failure the
 * message is available from ocp_last_error() on the same thread until the
 * next failing call. Buffers returned through out-parameters belong to the
 * caller and are released with ocp_buffer_free().
 */
#ifndef OCP_OCP_H
#define OCP_OCP_H

#include <stddef.h>
#include <stdint.h>

#if defined(OCP_BUILDING_LIBRARY)
#define OCP_API __attribute__((visibility("default")))
#else
#define OCP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ocp_status {
  OCP_OK = 0,
  OCP_ERR_NOT_FOUND = 1,
  OCP_ERR_BOUNDS = 2,
  OCP_ERR_INVALID = 3,
  OCP_ERR_CONFLICT = 4,
  OCP_ERR_PERMISSION = 5,
  OCP_ERR_STORAGE = 6,
  OCP_ERR_INTEGRITY = 7,
  OCP_ERR_CONFIG = 8,
  OCP_ERR_ALIGNMENT = 9,
  OCP_ERR_OUT_OF_RANGE = 10,
  OCP_ERR_LOCKED = 11,
  OCP_ERR_INTERNAL = 100
} ocp_status;

typedef struct ocp_engine ocp_engine;
typedef struct ocp_buffer ocp_buffer;

OCP_API const char* ocp_last_error(void);
OCP_API const char* ocp_status_name(ocp_status status);

/* data_dir NULL or "" opens a purely in-memory engine. placement_file may be
 * NULL (defaults to <data_dir>/placement.conf); cache_bytes 0 uses 256 MiB. */
OCP_API ocp_status ocp_open(const char* data_dir, const char* placement_file, uint64_t cache_bytes, ocp_engine** out);
OCP_API void ocp_close(ocp_engine* engine);

/* Configuration documents are JSON, as served under /admin/. */
OCP_API ocp_status ocp_create_dataset(ocp_engine* engine, const char* json);
OCP_API ocp_status ocp_create_project(ocp_engine* engine, const char* json);
/* kind is "dataset" or "project". */
OCP_API ocp_status ocp_describe(ocp_engine* engine, const char* kind, const char* name, ocp_buffer** out);

/* One REST request dispatched in-process. Protocol errors are reported
 * through http_status with OCP_OK as the return value. */
OCP_API ocp_status ocp_request(ocp_engine* engine, const char* method, const char* target, const void* body,
                               size_t body_len, int* http_status, ocp_buffer** out);

OCP_API ocp_status ocp_ingest(ocp_engine* engine, const char* token, const char* slice_dir);
OCP_API ocp_status ocp_build_pyramid(ocp_engine* engine, const char* token);
OCP_API ocp_status ocp_propagate(ocp_engine* engine, const char* token);

typedef struct ocp_synth_options {
  uint32_t synapses;
  uint32_t dendrites;
  uint64_t seed;
  uint32_t batch;
} ocp_synth_options;

/* report: JSON with the new ids and the densest dendrite fill fraction. */
OCP_API ocp_status ocp_synth_annotations(ocp_engine* engine, const char* token, const ocp_synth_options* options,
                                         ocp_buffer** report);

typedef struct ocp_cutout_bench {
  const char* mode; /* aligned, unaligned or cached */
  const uint32_t* sizes_mb;
  size_t n_sizes;
  const uint32_t* parallel;
  size_t n_parallel;
  uint32_t requests;
  uint32_t trials;
  uint64_t seed;
} ocp_cutout_bench;

typedef struct ocp_write_bench {
  uint32_t objects;
  uint32_t batch;
  uint32_t parallel;
  uint64_t seed;
} ocp_write_bench;

/* Both benchmarks write CSV and finish with ocp_verify(). */
OCP_API ocp_status ocp_measure_cutout(ocp_engine* engine, const char* token, const ocp_cutout_bench* options,
                                      ocp_buffer** csv);
OCP_API ocp_status ocp_measure_write(ocp_engine* engine, const char* token, const ocp_write_bench* options,
                                     ocp_buffer** csv);
OCP_API ocp_status ocp_verify(ocp_engine* engine, const char* token, ocp_buffer** report);

/* kind is "sqlite" (path relative to the placement file) or "memory". */
OCP_API ocp_status ocp_add_backend(ocp_engine* engine, const char* id, const char* kind, const char* path);
OCP_API ocp_status ocp_migrate(ocp_engine* engine, const char* token, const char* from, const char* to);
OCP_API ocp_status ocp_placement_report(ocp_engine* engine, const char* token, ocp_buffer** report);

/* Blocks until ocp_stop() is called from another thread. */
OCP_API ocp_status ocp_serve(ocp_engine* engine, const char* host, int port, unsigned threads);
OCP_API void ocp_stop(ocp_engine* engine);

OCP_API const uint8_t* ocp_buffer_data(const ocp_buffer* buffer);
OCP_API size_t ocp_buffer_size(const ocp_buffer* buffer);
OCP_API void ocp_buffer_free(ocp_buffer* buffer);

#ifdef __cplusplus
}
#endif

#endif /* OCP_OCP_H */
