#pragma once

// Application-level data distribution. Backends are independent key-value
// stores ("nodes"); the placement table says which of them hold a project
// and how its Morton key space is split between them.
//
// Placement file format, one directive per line, '#' starts a comment:
//
//   backend <id> sqlite <path>      path is relative to the file's directory
//   backend <id> memory
//   project <token> type=<image|annotation> shards=<n> backends=<id,id,...>
//           [active_write=<0|1>] [write_backend=<id>]
//
// (the project directive is a single line). With active_write=1 every key of
// the project lives on write_backend until it is migrated away.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "ocp/backend.hpp"
#include "ocp/curve.hpp"
#include "ocp/dataset.hpp"

namespace ocp {

struct CuboidKey {
  std::string project;
  unsigned level = 0;
  std::uint32_t channel = 0;
  MortonKey morton;
};

struct Placement {
  std::string project;
  ProjectType type = ProjectType::kImage;
  std::uint32_t shards = 1;
  std::vector<std::string> backends;  // one per shard
  bool active_write = false;
  std::string write_backend;

  bool operator==(const Placement&) const = default;
};

struct BackendSpec {
  std::string id;
  std::string kind;  // "sqlite" or "memory"
  std::filesystem::path path;
};

struct BackendUsage {
  std::string backend;
  std::uint64_t keys = 0;
  std::uint64_t cuboids = 0;
  std::uint64_t bytes = 0;
};

/// Where a migration may be interrupted, for failure testing.
enum class MigrationFault { kNone, kAfterCopy, kAfterSwitch };

class Router {
 public:
  /// Key space size for (project, level), supplied by the catalog owner.
  using KeySpaceFn = std::function<std::uint64_t(const std::string& project, unsigned level)>;

  Router() = default;
  explicit Router(std::filesystem::path placement_file);

  void load();
  void save() const;
  const std::filesystem::path& placement_file() const { return file_; }
  void set_key_space(KeySpaceFn fn) { key_space_ = std::move(fn); }

  /// Creates (or reopens) a backend from its spec and remembers the spec.
  void add_backend(const BackendSpec& spec);
  /// Registers a caller-owned backend. It is not written to the placement file.
  void attach_backend(const std::string& id, std::shared_ptr<Backend> backend);
  bool has_backend(const std::string& id) const;
  InstrumentedBackend& backend(const std::string& id) const;
  std::vector<std::string> backend_ids() const;

  void set_placement(Placement p);
  bool has_placement(const std::string& project) const;
  /// Immutable snapshot; stays valid across later placement changes.
  std::shared_ptr<const Placement> placement(const std::string& project) const;

  InstrumentedBackend& route(const CuboidKey& key) const;
  /// Backend holding the project's index, metadata and counters.
  InstrumentedBackend& home(const std::string& project) const;
  /// Distinct backends a project's keys may live on.
  std::vector<std::string> backends_of(const std::string& project) const;

  /// Moves every key of `project` stored on `from` to `to`. The copy is
  /// verified (count and checksum) before the placement switch; the source
  /// is only cleared after the switch. Caller must quiesce the project.
  void migrate(const std::string& project, const std::string& from, const std::string& to,
               MigrationFault fault = MigrationFault::kNone);

  std::vector<BackendUsage> placement_report(const std::string& project) const;

 private:
  InstrumentedBackend& route_in(const Placement& p, const CuboidKey& key) const;

  std::filesystem::path file_;
  KeySpaceFn key_space_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<InstrumentedBackend>> backends_;
  std::map<std::string, BackendSpec> specs_;
  std::map<std::string, std::shared_ptr<const Placement>> placements_;
};

std::string format_placement_line(const Placement& p);
Placement parse_placement_line(const std::string& line);

}  // namespace ocp
