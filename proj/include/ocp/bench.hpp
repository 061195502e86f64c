#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ocp/engine.hpp"

namespace ocp {

/// Loads <dir>/<z>.png (decimal, zero-padded to a common width) for every z
/// of the level-0 extent into a uint8 image project, then builds the pyramid.
/// Slices may be smaller than the XY extent; the rest stays zero.
void ingest_slices(Engine& engine, const std::string& token, const std::filesystem::path& dir);

struct SynthOptions {
  std::uint32_t synapses = 0;
  std::uint32_t dendrites = 0;
  std::uint64_t seed = 1;
  std::uint32_t batch = 40;
};

struct SynthReport {
  std::vector<std::uint32_t> synapse_ids;
  std::vector<std::uint32_t> dendrite_ids;
  double max_dendrite_fill = 0;  // voxels / voxel bounding-box volume
};

/// Compact blobs (tens of voxels, type synapse) and thin diagonal polylines
/// (type segment) filling at most 0.4% of their bounding box.
SynthReport synth_annotations(Engine& engine, const std::string& token, const SynthOptions& options);

/// Voxels of one thin diagonal dendrite of `length` steps from `start`,
/// descending `dz` slices.
VoxelList dendrite_voxels(const Extent& start, std::uint64_t length, std::uint64_t dz, std::uint64_t seed);

enum class CutoutMode { kAligned, kUnaligned, kCached };
std::string_view cutout_mode_name(CutoutMode m);
CutoutMode parse_cutout_mode(std::string_view name);

struct CutoutBenchOptions {
  CutoutMode mode = CutoutMode::kAligned;
  std::vector<std::uint32_t> sizes_mb{1};   // powers of two
  std::vector<std::uint32_t> parallel{1};
  std::uint32_t requests = 16;   // per (size, parallel) point
  std::uint32_t trials = 1;      // best of
  std::uint64_t seed = 7;
};

struct CutoutResult {
  CutoutMode mode;
  std::uint32_t size_mb = 0;
  std::uint32_t parallel = 0;
  double mb_per_s = 0;
  double cuboids_read = 0;  // backend cuboid reads per request
};

/// Cutout dims (x, y, z) of a power-of-two size for a voxel width, near
/// cubic with z at most max_z (0 = unbounded).
Extent cutout_shape(std::uint32_t size_mb, std::size_t width, std::uint64_t max_z = 0);

/// GET cutout requests through the service dispatcher. Disk modes drop the
/// engine cache and the OS page cache of the backends before every trial;
/// cached mode warms the engine cache first.
std::vector<CutoutResult> measure_cutout(Engine& engine, const std::string& token, const CutoutBenchOptions& options);

struct WriteBenchOptions {
  std::uint32_t objects = 400;
  std::uint32_t batch = 1;
  std::uint32_t parallel = 1;
  std::uint64_t seed = 11;
};

struct WriteResult {
  std::uint32_t batch = 0;
  std::uint32_t parallel = 0;
  std::uint32_t objects = 0;
  double objects_per_s = 0;
  std::uint64_t index_round_trips = 0;
  double round_trips_per_object = 0;
};

/// Small random synapse writes through the service in batches of `batch`.
WriteResult measure_write(Engine& engine, const std::string& token, const WriteBenchOptions& options);

struct VerifyReport {
  std::uint64_t objects = 0;
  std::uint64_t index_entries = 0;
  std::uint64_t cuboids = 0;
};

/// Index soundness at every level (annotation projects) and cutout
/// round-trip through the service. Throws kIntegrity on any mismatch.
VerifyReport verify_project(Engine& engine, const std::string& token);

std::string cutout_csv(const std::vector<CutoutResult>& rows);
std::string write_csv(const std::vector<WriteResult>& rows);

}  // namespace ocp
