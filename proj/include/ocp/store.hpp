#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <future>
#include <list>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ocp/cuboid.hpp"
#include "ocp/curve.hpp"
#include "ocp/dataset.hpp"
#include "ocp/router.hpp"
#include "ocp/volume.hpp"

namespace ocp {

/// LRU of decompressed cuboids keyed by backend key, bounded in bytes.
class CuboidCache {
 public:
  explicit CuboidCache(std::size_t capacity_bytes) : capacity_(capacity_bytes) {}

  std::shared_ptr<const Cuboid> find(const std::string& key);
  /// Dropped when any invalidation happened after `read_epoch` was taken.
  void insert(const std::string& key, std::shared_ptr<const Cuboid> cuboid, std::uint64_t read_epoch);
  std::uint64_t epoch() const;

  /// Concurrent misses on one key share a single backend fetch. A reader
  /// either owns the fetch (`owned` set) and must finish or abandon it, or
  /// waits on `pending`. Owners complete their own fetches before waiting on
  /// others, so readers never wait on each other in a cycle.
  struct Flight;
  struct Fetch {
    std::shared_ptr<Flight> owned;
    std::shared_future<std::shared_ptr<const Cuboid>> pending;
  };
  Fetch begin_fetch(const std::string& key);
  /// Wakes the waiters and caches the cuboid as insert() would.
  void finish_fetch(const std::string& key, const Fetch& fetch, std::shared_ptr<const Cuboid> cuboid,
                    std::uint64_t read_epoch);
  void abandon_fetch(const std::string& key, const Fetch& fetch, std::exception_ptr error);

  /// Also detaches in-flight fetches, so later readers refetch.
  void invalidate(const std::string& key);
  void clear();
  std::size_t bytes() const;
  std::uint64_t hits() const { return hits_.load(); }
  std::uint64_t misses() const { return misses_.load(); }

 private:
  using Entry = std::pair<std::string, std::shared_ptr<const Cuboid>>;
  mutable std::mutex mu_;
  std::size_t capacity_;
  std::size_t bytes_ = 0;
  std::uint64_t epoch_ = 0;
  std::list<Entry> lru_;  // front = most recent
  std::unordered_map<std::string, std::list<Entry>::iterator> map_;
  std::unordered_map<std::string, std::shared_ptr<Flight>> flights_;
  std::atomic<std::uint64_t> hits_{0}, misses_{0};
};

/// Striped mutexes serializing read-modify-write per cuboid key.
class KeyLocks {
 public:
  std::mutex& for_key(std::string_view key) { return stripes_[std::hash<std::string_view>{}(key) % stripes_.size()]; }

 private:
  std::array<std::mutex, 1024> stripes_;
};

/// Runtime state shared by every handle on one project.
struct ProjectState {
  std::atomic<bool> locked{false};  // batch job or migration in progress
  std::mutex write_mu;              // annotation writes: cuboid updates plus their index batch
};

/// Everything a store handle needs to reach a project's data.
struct ProjectContext {
  DatasetConfig dataset;
  ProjectConfig project;
  Router* router = nullptr;
  CuboidCache* cache = nullptr;  // optional
  KeyLocks* cuboid_locks = nullptr;
  std::shared_ptr<ProjectState> state;
  bool maintenance = false;  // batch jobs may write while the project is locked
};

/// Dense chunked array access for one project.
class CuboidStore {
 public:
  explicit CuboidStore(ProjectContext ctx);

  const ProjectContext& context() const { return ctx_; }
  ResolutionLevel level(unsigned index) const { return ctx_.dataset.level(index); }
  Codec codec() const;

  /// Exact sub-volume, clipped to the level extent. Unwritten space reads as
  /// zero. Throws kBounds when the region lies entirely outside the extent.
  DenseVolume read_cutout(unsigned level, const VoxelRegion& region) const;
  /// Read-modify-write of every intersecting cuboid. The region must lie
  /// inside the level extent and match the volume's dims.
  void write_cutout(unsigned level, const VoxelRegion& region, const DenseVolume& volume);

  /// Absent keys yield the zero cuboid.
  Cuboid get_cuboid(const CuboidKey& key, bool with_exceptions = false) const;
  /// All-zero cuboids without exceptions are erased rather than stored.
  void put_cuboid(const CuboidKey& key, const Cuboid& cuboid);

  /// Fetches cuboids of one (level, channel) in ascending key order, one
  /// multi-key read per backend. Missing keys come back as nullopt.
  std::vector<std::optional<Cuboid>> fetch(unsigned level, std::uint32_t channel,
                                           std::span<const std::uint64_t> mortons, bool with_exceptions) const;

  /// Every stored cuboid of (level, channel) in ascending Morton order.
  void scan_level(unsigned level, std::uint32_t channel,
                  const std::function<void(std::uint64_t morton, Cuboid&& cuboid)>& fn) const;
  /// Stored Morton keys of (level, channel) without decoding payloads.
  std::vector<std::uint64_t> stored_keys(unsigned level, std::uint32_t channel) const;
  /// Removes every cuboid (and exception list) of a level, all channels.
  void clear_level(unsigned level);

  void check_writable() const;
  CuboidKey key(unsigned level, std::uint32_t channel, std::uint64_t morton) const {
    return CuboidKey{ctx_.project.token, level, channel, MortonKey{morton, level_dims()}};
  }

 private:
  unsigned level_dims() const { return ctx_.dataset.has_time ? 4u : 3u; }
  std::vector<std::uint32_t> channels_of(const VoxelRegion& region) const;
  std::optional<Cuboid> decode(const std::optional<std::string>& data, const std::optional<std::string>& exc,
                               const ResolutionLevel& lv) const;
  void store_encoded(const CuboidKey& key, const Cuboid& cuboid, WriteBatch& batch) const;

  ProjectContext ctx_;
};

}  // namespace ocp
