#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "ocp/annotations.hpp"
#include "ocp/router.hpp"
#include "ocp/store.hpp"

namespace ocp {

struct EngineOptions {
  /// Holds catalog.json and the default backend. Empty means a purely
  /// in-memory engine with nothing persisted.
  std::filesystem::path data_dir;
  /// Defaults to <data_dir>/placement.conf.
  std::filesystem::path placement_file;
  std::size_t cache_bytes = std::size_t{256} << 20;
};

/// Dataset and project configuration as canonical JSON documents.
std::string dataset_to_json(const DatasetConfig& ds, bool with_levels = false);
DatasetConfig dataset_from_json(std::string_view text);
std::string project_to_json(const ProjectConfig& p);
ProjectConfig project_from_json(std::string_view text);
/// Optional "placement" member of a project document.
std::optional<Placement> placement_from_json(std::string_view text, const ProjectConfig& p);

/// Catalog, backends, placement and shared runtime state of one server.
class Engine {
 public:
  explicit Engine(EngineOptions options);

  void create_dataset(const DatasetConfig& ds);
  /// Unplaced projects go to the "default" backend, unsharded.
  void create_project(const ProjectConfig& p, std::optional<Placement> placement = std::nullopt);
  DatasetConfig dataset(const std::string& name) const;
  ProjectConfig project(const std::string& token) const;
  std::vector<std::string> dataset_names() const;
  std::vector<std::string> project_tokens() const;

  ProjectContext context(const std::string& token, bool maintenance = false);
  CuboidStore store(const std::string& token) { return CuboidStore(context(token)); }
  AnnotationStore annotations(const std::string& token) { return AnnotationStore(context(token)); }

  void build_pyramid(const std::string& token);
  void propagate(const std::string& token);
  /// Locks the project, moves its keys and drops cached cuboids.
  void migrate(const std::string& token, const std::string& from, const std::string& to,
               MigrationFault fault = MigrationFault::kNone);

  Router& router() { return router_; }
  CuboidCache& cache() { return cache_; }
  const EngineOptions& options() const { return options_; }

 private:
  void save_catalog() const;
  void load_catalog();
  std::shared_ptr<ProjectState> state_of(const std::string& token);

  EngineOptions options_;
  Router router_;
  CuboidCache cache_;
  KeyLocks cuboid_locks_;
  mutable std::shared_mutex mu_;
  std::map<std::string, DatasetConfig> datasets_;
  std::map<std::string, ProjectConfig> projects_;
  std::map<std::string, std::shared_ptr<ProjectState>> states_;
};

}  // namespace ocp
