#include "ocp/engine.hpp"

#include <fstream>
#include <mutex>
#include <sstream>

#include "json.hpp"
#include "ocp/pyramid.hpp"

namespace ocp {

using json = nlohmann::json;

namespace {

std::filesystem::path placement_path(const EngineOptions& o) {
  if (!o.placement_file.empty()) return o.placement_file;
  if (o.data_dir.empty()) return {};
  return o.data_dir / "placement.conf";
}

json extent_json(const Extent& e) { return json::array({e[0], e[1], e[2], e[3]}); }

Extent extent_from(const json& j) {
  if (!j.is_array() || j.size() < 3 || j.size() > 4) fail(ErrorCode::kInvalid, "extent must list 3 or 4 sizes");
  Extent e{0, 0, 0, 1};
  for (std::size_t d = 0; d < j.size(); ++d) e[d] = j[d].get<std::uint64_t>();
  return e;
}

template <typename F>
auto parse_doc(std::string_view text, F&& body) {
  try {
    const auto j = json::parse(text);
    if (!j.is_object()) fail(ErrorCode::kInvalid, "configuration must be a JSON object");
    return body(j);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalid, std::string("bad configuration document: ") + e.what());
  }
}

json dataset_json(const DatasetConfig& ds) {
  json j;
  j["name"] = ds.name;
  j["extent"] = extent_json(ds.base_extent);
  j["has_time"] = ds.has_time;
  j["channels"] = ds.channels;
  j["levels"] = ds.levels;
  j["shape_schedule"] = json::array();
  for (const auto& rule : ds.shape_schedule)
    j["shape_schedule"].push_back({{"from_level", rule.from_level}, {"shape", extent_json(rule.shape)}});
  return j;
}

json project_json(const ProjectConfig& p) {
  return {{"token", p.token},
          {"dataset", p.dataset},
          {"type", std::string(project_type_name(p.type))},
          {"voxel_type", std::string(voxel_type_name(p.voxel_type))},
          {"exceptions", p.exceptions},
          {"read_only", p.read_only},
          {"compress", p.compress},
          {"tile_size", p.tile_size},
          {"annotation_level", p.annotation_level}};
}

}  // namespace

std::string dataset_to_json(const DatasetConfig& ds, bool with_levels) {
  json j = dataset_json(ds);
  if (with_levels) {
    j["resolutions"] = json::array();
    for (unsigned r = 0; r < ds.levels; ++r) {
      const auto lv = ds.level(r);
      j["resolutions"].push_back(
          {{"level", r}, {"extent", extent_json(lv.extent)}, {"cuboid", extent_json(lv.cuboid)}, {"scale", lv.scale}});
    }
  }
  return j.dump();
}

DatasetConfig dataset_from_json(std::string_view text) {
  return parse_doc(text, [](const json& j) {
    DatasetConfig ds;
    ds.name = j.at("name").get<std::string>();
    ds.base_extent = extent_from(j.at("extent"));
    ds.has_time = j.value("has_time", j.at("extent").size() == 4);
    if (!ds.has_time) ds.base_extent[3] = 1;
    ds.channels = j.value("channels", 1u);
    ds.levels = j.value("levels", 1u);
    if (j.contains("shape_schedule")) {
      ds.shape_schedule.clear();
      for (const auto& rule : j["shape_schedule"])
        ds.shape_schedule.push_back({rule.at("from_level").get<unsigned>(), extent_from(rule.at("shape"))});
    }
    ds.validate();
    return ds;
  });
}

std::string project_to_json(const ProjectConfig& p) { return project_json(p).dump(); }

ProjectConfig project_from_json(std::string_view text) {
  return parse_doc(text, [](const json& j) {
    ProjectConfig p;
    p.token = j.at("token").get<std::string>();
    p.dataset = j.at("dataset").get<std::string>();
    p.type = parse_project_type(j.value("type", std::string("image")));
    const auto vt = j.value("voxel_type", std::string(p.type == ProjectType::kAnnotation ? "label32" : "uint8"));
    p.voxel_type = parse_voxel_type(vt);
    p.exceptions = j.value("exceptions", false);
    p.read_only = j.value("read_only", false);
    p.compress = j.value("compress", true);
    p.tile_size = j.value("tile_size", 256u);
    p.annotation_level = j.value("annotation_level", 0u);
    return p;
  });
}

std::optional<Placement> placement_from_json(std::string_view text, const ProjectConfig& p) {
  return parse_doc(text, [&](const json& j) -> std::optional<Placement> {
    if (!j.contains("placement")) return std::nullopt;
    const auto& pj = j["placement"];
    Placement pl;
    pl.project = p.token;
    pl.type = p.type;
    pl.backends = pj.value("backends", std::vector<std::string>{"default"});
    pl.shards = pj.value("shards", static_cast<std::uint32_t>(pl.backends.size()));
    pl.active_write = pj.value("active_write", false);
    pl.write_backend = pj.value("write_backend", std::string());
    return pl;
  });
}

Engine::Engine(EngineOptions options)
    : options_(std::move(options)), router_(placement_path(options_)), cache_(options_.cache_bytes) {
  if (!options_.data_dir.empty()) std::filesystem::create_directories(options_.data_dir);
  const auto file = router_.placement_file();
  if (!file.empty() && std::filesystem::exists(file)) {
    router_.load();
  } else {
    if (options_.data_dir.empty())
      router_.add_backend({"default", "memory", {}});
    else
      router_.add_backend({"default", "sqlite", std::filesystem::absolute(options_.data_dir / "default.db")});
    router_.save();
  }
  router_.set_key_space([this](const std::string& token, unsigned level) {
    std::shared_lock lock(mu_);
    const auto p = projects_.find(token);
    if (p == projects_.end()) fail(ErrorCode::kNotFound, "no project " + token);
    return key_space_size(datasets_.at(p->second.dataset).level(level));
  });
  load_catalog();
}

void Engine::load_catalog() {
  if (options_.data_dir.empty()) return;
  const auto path = options_.data_dir / "catalog.json";
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path);
  std::stringstream text;
  text << in.rdbuf();
  try {
    const auto j = json::parse(text.str());
    for (const auto& d : j.at("datasets")) {
      auto ds = dataset_from_json(d.dump());
      datasets_[ds.name] = ds;
    }
    for (const auto& p : j.at("projects")) {
      auto pc = project_from_json(p.dump());
      projects_[pc.token] = pc;
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, "corrupt catalog " + path.string() + ": " + e.what());
  }
}

void Engine::save_catalog() const {
  if (options_.data_dir.empty()) return;
  json j;
  j["datasets"] = json::array();
  j["projects"] = json::array();
  for (const auto& [name, ds] : datasets_) j["datasets"].push_back(dataset_json(ds));
  for (const auto& [token, p] : projects_) j["projects"].push_back(project_json(p));
  const auto path = options_.data_dir / "catalog.json";
  const auto tmp = options_.data_dir / "catalog.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) fail(ErrorCode::kStorage, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void Engine::create_dataset(const DatasetConfig& ds) {
  ds.validate();
  std::unique_lock lock(mu_);
  if (datasets_.count(ds.name)) fail(ErrorCode::kConflict, "dataset " + ds.name + " already exists");
  datasets_[ds.name] = ds;
  save_catalog();
}

void Engine::create_project(const ProjectConfig& p, std::optional<Placement> placement) {
  {
    std::unique_lock lock(mu_);
    const auto ds = datasets_.find(p.dataset);
    if (ds == datasets_.end()) fail(ErrorCode::kNotFound, "no dataset " + p.dataset);
    p.validate(ds->second);
    if (projects_.count(p.token)) fail(ErrorCode::kConflict, "project " + p.token + " already exists");
    if (router_.has_placement(p.token)) fail(ErrorCode::kConflict, "placement for " + p.token + " already exists");
    projects_[p.token] = p;
  }
  Placement pl = placement.value_or(Placement{p.token, p.type, 1, {"default"}, false, {}});
  pl.project = p.token;
  pl.type = p.type;
  try {
    router_.set_placement(pl);
    router_.save();
  } catch (...) {
    std::unique_lock lock(mu_);
    projects_.erase(p.token);
    throw;
  }
  std::unique_lock lock(mu_);
  save_catalog();
}

DatasetConfig Engine::dataset(const std::string& name) const {
  std::shared_lock lock(mu_);
  auto it = datasets_.find(name);
  if (it == datasets_.end()) fail(ErrorCode::kNotFound, "no dataset " + name);
  return it->second;
}

ProjectConfig Engine::project(const std::string& token) const {
  std::shared_lock lock(mu_);
  auto it = projects_.find(token);
  if (it == projects_.end()) fail(ErrorCode::kNotFound, "no project " + token);
  return it->second;
}

std::vector<std::string> Engine::dataset_names() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [name, ds] : datasets_) out.push_back(name);
  return out;
}

std::vector<std::string> Engine::project_tokens() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [token, p] : projects_) out.push_back(token);
  return out;
}

std::shared_ptr<ProjectState> Engine::state_of(const std::string& token) {
  std::unique_lock lock(mu_);
  auto& s = states_[token];
  if (!s) s = std::make_shared<ProjectState>();
  return s;
}

ProjectContext Engine::context(const std::string& token, bool maintenance) {
  ProjectContext ctx;
  ctx.project = project(token);
  ctx.dataset = dataset(ctx.project.dataset);
  ctx.router = &router_;
  ctx.cache = &cache_;
  ctx.cuboid_locks = &cuboid_locks_;
  ctx.state = state_of(token);
  ctx.maintenance = maintenance;
  return ctx;
}

void Engine::build_pyramid(const std::string& token) {
  build_image_pyramid(context(token));
}

void Engine::propagate(const std::string& token) { propagate_annotations(context(token)); }

void Engine::migrate(const std::string& token, const std::string& from, const std::string& to,
                     MigrationFault fault) {
  const auto ctx = context(token);
  ProjectLock lock(*ctx.state);
  std::lock_guard writes(ctx.state->write_mu);
  router_.migrate(token, from, to, fault);
  cache_.clear();
}

}  // namespace ocp
