#include "ocp/bench.hpp"

#include <atomic>
#include <bit>
#include <chrono>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "ocp/service.hpp"
#include "ocp/tiles.hpp"
#include "ocp/wire.hpp"

namespace ocp {

namespace {

using Clock = std::chrono::steady_clock;

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCode::kNotFound, "cannot open " + p.string());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string zero_pad(std::uint64_t v, std::size_t width) {
  auto s = std::to_string(v);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

/// Runs `count` jobs on `workers` threads; the first exception is rethrown.
template <typename F>
void run_parallel(std::uint32_t count, std::uint32_t workers, F&& job) {
  std::atomic<std::uint32_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto loop = [&] {
    for (std::uint32_t i; (i = next.fetch_add(1)) < count;) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::uint32_t w = 1; w < std::max(workers, 1u); ++w) threads.emplace_back(loop);
  loop();
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

std::string cutout_url(const std::string& token, unsigned level, const Box& b) {
  Route r;
  r.kind = Route::Kind::kCutout;
  r.token = token;
  r.level = level;
  r.box = b;
  return render_route(r);
}

IoSnapshot cuboid_reads(Engine& engine, const std::string& token) {
  IoSnapshot sum;
  for (const auto& id : engine.router().backends_of(token)) {
    const auto c = engine.router().backend(id).counters(keys::Kind::kCuboid);
    sum.read_calls += c.read_calls;
    sum.keys_read += c.keys_read;
    sum.bytes_read += c.bytes_read;
  }
  return sum;
}

std::map<std::uint32_t, std::vector<std::uint64_t>> scanned_index(const CuboidStore& store, unsigned level) {
  std::map<std::uint32_t, std::vector<std::uint64_t>> out;
  store.scan_level(level, 0, [&](std::uint64_t morton, Cuboid&& c) {
    std::set<std::uint32_t> ids;
    for (std::uint64_t i = 0; i < c.voxel_count(); ++i)
      if (auto v = c.label(i)) ids.insert(v);
    for (const auto& [off, list] : c.exceptions) ids.insert(list.begin(), list.end());
    for (auto id : ids) out[id].push_back(morton);
  });
  return out;
}

VoxelList blob_voxels(const Extent& center, std::int64_t radius, const Extent& extent) {
  VoxelList out;
  for (std::int64_t dz = -radius; dz <= radius; ++dz)
    for (std::int64_t dy = -radius; dy <= radius; ++dy)
      for (std::int64_t dx = -radius; dx <= radius; ++dx) {
        if (dx * dx + dy * dy + dz * dz > radius * radius) continue;
        const std::int64_t p[3] = {static_cast<std::int64_t>(center[0]) + dx, static_cast<std::int64_t>(center[1]) + dy,
                                   static_cast<std::int64_t>(center[2]) + dz};
        bool inside = true;
        for (int d = 0; d < 3; ++d) inside = inside && p[d] >= 0 && p[d] < static_cast<std::int64_t>(extent[d]);
        if (inside) out.push_back({static_cast<std::uint64_t>(p[0]), static_cast<std::uint64_t>(p[1]),
                                   static_cast<std::uint64_t>(p[2]), 0});
      }
  return out;
}

double fill_fraction(const VoxelList& voxels) {
  Box b{voxels.front(), voxels.front()};
  for (const auto& v : voxels)
    for (std::size_t d = 0; d < 3; ++d) {
      b.lo[d] = std::min(b.lo[d], v[d]);
      b.hi[d] = std::max(b.hi[d], v[d]);
    }
  double volume = 1;
  for (std::size_t d = 0; d < 3; ++d) volume *= static_cast<double>(b.hi[d] - b.lo[d] + 1);
  return static_cast<double>(voxels.size()) / volume;
}

}  // namespace

void ingest_slices(Engine& engine, const std::string& token, const std::filesystem::path& dir) {
  CuboidStore store = engine.store(token);
  const auto& ctx = store.context();
  if (ctx.project.type != ProjectType::kImage || ctx.project.voxel_type != VoxelType::kUint8)
    fail(ErrorCode::kInvalid, "ingest loads 8-bit image projects only");
  if (!std::filesystem::is_directory(dir)) fail(ErrorCode::kNotFound, "no slice directory " + dir.string());

  std::size_t pad = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto stem = entry.path().stem().string();
    if (entry.path().extension() == ".png" && !stem.empty() &&
        std::all_of(stem.begin(), stem.end(), [](unsigned char c) { return std::isdigit(c); }))
      pad = std::max(pad, stem.size());
  }
  const auto lv = store.level(0);
  auto slice_path = [&](std::uint64_t z) {
    auto p = dir / (zero_pad(z, pad) + ".png");
    if (!std::filesystem::exists(p) && std::filesystem::exists(dir / (std::to_string(z) + ".png")))
      p = dir / (std::to_string(z) + ".png");
    if (!std::filesystem::exists(p)) fail(ErrorCode::kNotFound, "missing slice file " + p.string());
    return p;
  };
  // Check the whole stack before writing anything.
  for (std::uint64_t z = 0; z < lv.extent[2]; ++z) slice_path(z);

  std::uint32_t width = 0, height = 0;
  for (std::uint64_t z0 = 0; z0 < lv.extent[2]; z0 += lv.cuboid[2]) {
    const std::uint64_t z1 = std::min(lv.extent[2], z0 + lv.cuboid[2]);
    DenseVolume slab;
    for (std::uint64_t z = z0; z < z1; ++z) {
      const auto path = slice_path(z);
      const Image img = png_decode(read_file(path));
      if (img.samples != 1) fail(ErrorCode::kInvalid, "slice is not grayscale: " + path.string());
      if (width == 0) {
        width = img.width;
        height = img.height;
        if (width > lv.extent[0] || height > lv.extent[1])
          fail(ErrorCode::kBounds, "slice larger than the dataset extent: " + path.string());
      }
      if (img.width != width || img.height != height)
        fail(ErrorCode::kInvalid, "slice size differs from the first slice: " + path.string());
      if (z == z0) slab = DenseVolume::zeros(VoxelType::kUint8, make_box(0, width, 0, height, z0, z1));
      std::memcpy(slab.data.data() + (z - z0) * width * height, img.pixels.data(), img.pixels.size());
    }
    store.write_cutout(0, VoxelRegion{slab.box(), {0}}, slab);
  }
  if (ctx.dataset.levels > 1) engine.build_pyramid(token);
}

VoxelList dendrite_voxels(const Extent& start, std::uint64_t length, std::uint64_t dz, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  VoxelList out;
  std::uint64_t y = start[1];
  for (std::uint64_t i = 0; i < length; ++i) {
    // Lateral jitter keeps the path irregular without thickening it.
    if (i > 0 && rng() % 4 == 0) y += 1;
    out.push_back({start[0] + i, y + i, start[2] + (length > 1 ? i * dz / (length - 1) : 0), 0});
  }
  return out;
}

SynthReport synth_annotations(Engine& engine, const std::string& token, const SynthOptions& options) {
  AnnotationStore ann = engine.annotations(token);
  const auto& ctx = ann.store().context();
  const auto lv = ann.store().level(ctx.project.annotation_level);
  const Extent& e = lv.extent;
  std::mt19937_64 rng(options.seed);
  auto uniform = [&](std::uint64_t lo, std::uint64_t hi) {  // [lo, hi)
    return hi <= lo ? lo : lo + rng() % (hi - lo);
  };

  const std::uint64_t length = std::min(e[0], e[1]) * 3 / 4;
  // The path descends length/4 slices, or as many as the volume has.
  const std::uint64_t dz = std::min<std::uint64_t>(std::max<std::uint64_t>(1, length / 4), e[2] - 1);
  if (options.dendrites > 0 && (length < 16 || dz == 0))
    fail(ErrorCode::kInvalid, "extent too small for synthetic dendrites");

  SynthReport report;
  std::vector<AnnotationWrite> pending;
  std::vector<std::uint32_t>* sink = nullptr;
  auto flush = [&] {
    if (pending.empty()) return;
    auto ids = ann.batch_write(std::move(pending), WriteOptions{});
    sink->insert(sink->end(), ids.begin(), ids.end());
    pending.clear();
  };

  sink = &report.synapse_ids;
  for (std::uint32_t i = 0; i < options.synapses; ++i) {
    AnnotationWrite w;
    w.level = ctx.project.annotation_level;
    w.object.type = ObjectType::kSynapse;
    w.object.confidence = static_cast<double>(uniform(50, 101)) / 100.0;
    w.object.author = "synth";
    w.payload = blob_voxels({uniform(0, e[0]), uniform(0, e[1]), uniform(0, e[2]), 0}, 2, e);
    pending.push_back(std::move(w));
    if (pending.size() >= options.batch) flush();
  }
  flush();

  sink = &report.dendrite_ids;
  for (std::uint32_t i = 0; i < options.dendrites; ++i) {
    const Extent start{uniform(0, e[0] - length), uniform(0, e[1] - length - length / 4 - 1), uniform(0, e[2] - dz), 0};
    auto voxels = dendrite_voxels(start, length, dz, rng());
    for (auto& v : voxels) v[1] = std::min(v[1], e[1] - 1);
    const double fill = fill_fraction(voxels);
    if (fill > 0.004) fail(ErrorCode::kInvalid, "synthetic dendrite too dense for the extent");
    report.max_dendrite_fill = std::max(report.max_dendrite_fill, fill);
    AnnotationWrite w;
    w.level = ctx.project.annotation_level;
    w.object.type = ObjectType::kSegment;
    w.object.author = "synth";
    w.payload = std::move(voxels);
    pending.push_back(std::move(w));
    if (pending.size() >= options.batch) flush();
  }
  flush();
  return report;
}

std::string_view cutout_mode_name(CutoutMode m) {
  switch (m) {
    case CutoutMode::kAligned: return "aligned";
    case CutoutMode::kUnaligned: return "unaligned";
    case CutoutMode::kCached: return "cached";
  }
  return "?";
}

CutoutMode parse_cutout_mode(std::string_view name) {
  if (name == "aligned") return CutoutMode::kAligned;
  if (name == "unaligned") return CutoutMode::kUnaligned;
  if (name == "cached") return CutoutMode::kCached;
  fail(ErrorCode::kInvalid, "mode is aligned, unaligned or cached");
}

Extent cutout_shape(std::uint32_t size_mb, std::size_t width, std::uint64_t max_z) {
  const std::uint64_t voxels = (std::uint64_t{size_mb} << 20) / width;
  if (!std::has_single_bit(voxels) || voxels < 8) fail(ErrorCode::kInvalid, "cutout sizes must be powers of two");
  const int k = std::countr_zero(voxels);
  const int a = (k + 2) / 3;
  Extent s{std::uint64_t{1} << a, std::uint64_t{1} << a, std::uint64_t{1} << (k - 2 * a), 1};
  // Shallow volumes trade depth for area, keeping the voxel count.
  for (int d = 0; max_z > 0 && s[2] > max_z; d ^= 1) {
    s[2] /= 2;
    s[d] *= 2;
  }
  return s;
}

std::vector<CutoutResult> measure_cutout(Engine& engine, const std::string& token, const CutoutBenchOptions& options) {
  Service service(engine);
  const CuboidStore store = engine.store(token);
  const auto lv = store.level(0);
  const std::size_t width = voxel_width(store.context().project.voxel_type);
  std::mt19937_64 rng(options.seed);
  std::vector<CutoutResult> out;

  for (const auto size_mb : options.sizes_mb) {
    const bool unaligned = options.mode == CutoutMode::kUnaligned;
    const std::uint64_t depth = lv.extent[2] - (unaligned ? lv.cuboid[2] : 0);
    const Extent shape = cutout_shape(size_mb, width, std::bit_floor(depth));
    Extent slots{};
    for (std::size_t d = 0; d < 3; ++d) {
      const std::uint64_t need = shape[d] + (unaligned ? lv.cuboid[d] : 0);
      if (need > lv.extent[d]) fail(ErrorCode::kInvalid, "cutout does not fit the dataset extent");
      slots[d] = (lv.extent[d] - need) / lv.cuboid[d] + 1;
    }
    std::vector<std::string> urls;
    for (std::uint32_t i = 0; i < options.requests; ++i) {
      Box b;
      for (std::size_t d = 0; d < 3; ++d) {
        b.lo[d] = (rng() % slots[d]) * lv.cuboid[d] + (unaligned ? lv.cuboid[d] / 2 + 1 : 0);
        b.hi[d] = b.lo[d] + shape[d];
      }
      urls.push_back(cutout_url(token, 0, b));
    }
    if (options.mode == CutoutMode::kCached) {
      // Keep the working set inside the engine cache.
      const std::size_t fit = std::max<std::size_t>(1, engine.options().cache_bytes / 2 / (std::size_t{size_mb} << 20));
      for (std::size_t i = fit; i < urls.size(); ++i) urls[i] = urls[i % fit];
    }

    for (const auto p : options.parallel) {
      CutoutResult best{options.mode, size_mb, p, 0, 0};
      for (std::uint32_t trial = 0; trial < std::max(options.trials, 1u); ++trial) {
        if (options.mode == CutoutMode::kCached) {
          for (const auto& u : urls) service.handle({"GET", u, {}});
        } else {
          engine.cache().clear();
          for (const auto& id : engine.router().backends_of(token)) engine.router().backend(id).drop_os_cache();
        }
        const auto before = cuboid_reads(engine, token);
        const auto t0 = Clock::now();
        run_parallel(static_cast<std::uint32_t>(urls.size()), p, [&](std::uint32_t i) {
          const auto res = service.handle({"GET", urls[i], {}});
          if (res.status != 200) fail(ErrorCode::kIntegrity, "cutout request failed: " + res.body);
        });
        const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        const auto reads = cuboid_reads(engine, token) - before;
        const double mbps = static_cast<double>(urls.size()) * size_mb / std::max(secs, 1e-9);
        if (mbps > best.mb_per_s) {
          best.mb_per_s = mbps;
          best.cuboids_read = static_cast<double>(reads.keys_read) / static_cast<double>(urls.size());
        }
      }
      out.push_back(best);
    }
  }
  return out;
}

WriteResult measure_write(Engine& engine, const std::string& token, const WriteBenchOptions& options) {
  Service service(engine);
  const AnnotationStore ann = engine.annotations(token);
  const auto& ctx = ann.store().context();
  const auto lv = ann.store().level(ctx.project.annotation_level);
  const unsigned ndim = ctx.dataset.has_time ? 4 : 3;
  const std::uint32_t batch = std::max(options.batch, 1u);
  std::mt19937_64 rng(options.seed);

  std::vector<std::string> bodies;
  for (std::uint32_t done = 0; done < options.objects;) {
    std::vector<AnnotationRecord> records;
    for (; records.size() < batch && done < options.objects; ++done) {
      AnnotationObject obj;
      obj.type = ObjectType::kSynapse;
      obj.author = "bench";
      const Extent c{rng() % lv.extent[0], rng() % lv.extent[1], rng() % lv.extent[2], 0};
      records.push_back({to_json(obj), PayloadKind::kVoxels, lv.index, encode_voxel_list(blob_voxels(c, 1, lv.extent), ndim)});
    }
    bodies.push_back(encode_records(records));
  }

  auto& home = engine.router().home(token);
  const auto before = home.counters(keys::Kind::kIndex);
  const auto t0 = Clock::now();
  const std::string url = "/" + token + "/?discipline=overwrite";
  run_parallel(static_cast<std::uint32_t>(bodies.size()), options.parallel, [&](std::uint32_t i) {
    const auto res = service.handle({"PUT", url, bodies[i]});
    if (res.status != 200) fail(ErrorCode::kIntegrity, "annotation write failed: " + res.body);
  });
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const auto delta = home.counters(keys::Kind::kIndex) - before;

  WriteResult r;
  r.batch = batch;
  r.parallel = options.parallel;
  r.objects = options.objects;
  r.objects_per_s = options.objects / std::max(secs, 1e-9);
  r.index_round_trips = delta.read_calls + delta.write_calls;
  r.round_trips_per_object = options.objects ? static_cast<double>(r.index_round_trips) / options.objects : 0;
  return r;
}

VerifyReport verify_project(Engine& engine, const std::string& token) {
  VerifyReport report;
  const auto ctx = engine.context(token);
  const CuboidStore store(ctx);
  if (ctx.project.type == ProjectType::kAnnotation) {
    const AnnotationStore ann(ctx);
    report.objects = ann.all_ids().size();
    for (unsigned r = 0; r < ctx.dataset.levels; ++r) {
      const auto indexed = ann.index_entries(r);
      const auto scanned = scanned_index(store, r);
      if (indexed != scanned) {
        for (const auto& [id, keys] : scanned)
          if (!indexed.count(id) || indexed.at(id) != keys)
            fail(ErrorCode::kIntegrity, "sparse index of id " + std::to_string(id) + " is wrong at level " +
                                            std::to_string(r));
        fail(ErrorCode::kIntegrity, "sparse index lists cuboids without the object at level " + std::to_string(r));
      }
      for (const auto& [id, keys] : indexed) report.index_entries += keys.size();
    }
  }
  report.cuboids = store.stored_keys(0, 0).size();

  // The service must return exactly what the store holds.
  const auto lv = store.level(0);
  Box b = intersect(make_box(0, 256, 0, 256, 0, 32), lv.bounds());
  Service service(engine);
  const auto res = service.handle({"GET", cutout_url(token, 0, b), {}});
  if (res.status != 200) fail(ErrorCode::kIntegrity, "verification cutout failed: " + res.body);
  const DenseVolume direct = store.read_cutout(0, VoxelRegion{b, {}});
  const DenseVolume served = decode_ocpb(res.body);
  if (served.data != direct.data || served.dims != direct.dims)
    fail(ErrorCode::kIntegrity, "served cutout differs from the stored data");
  return report;
}

std::string cutout_csv(const std::vector<CutoutResult>& rows) {
  std::ostringstream out;
  out << "mode,size,parallel,mb_per_s,cuboids_read\n";
  for (const auto& r : rows)
    out << cutout_mode_name(r.mode) << ',' << r.size_mb << ',' << r.parallel << ',' << r.mb_per_s << ','
        << r.cuboids_read << '\n';
  return out.str();
}

std::string write_csv(const std::vector<WriteResult>& rows) {
  std::ostringstream out;
  out << "batch,parallel,objects,objects_per_s,index_round_trips,round_trips_per_object\n";
  for (const auto& r : rows)
    out << r.batch << ',' << r.parallel << ',' << r.objects << ',' << r.objects_per_s << ',' << r.index_round_trips
        << ',' << r.round_trips_per_object << '\n';
  return out.str();
}

}  // namespace ocp
