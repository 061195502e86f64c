#include "ocp/router.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "ocp/bytes.hpp"

namespace ocp {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

std::string format_placement_line(const Placement& p) {
  std::ostringstream out;
  out << "project " << p.project << " type=" << project_type_name(p.type) << " shards=" << p.shards
      << " backends=";
  for (std::size_t i = 0; i < p.backends.size(); ++i) out << (i ? "," : "") << p.backends[i];
  out << " active_write=" << (p.active_write ? 1 : 0);
  if (!p.write_backend.empty()) out << " write_backend=" << p.write_backend;
  return out.str();
}

Placement parse_placement_line(const std::string& line) {
  std::istringstream in(line);
  std::string word;
  Placement p;
  in >> word >> p.project;
  if (word != "project" || p.project.empty()) fail(ErrorCode::kConfig, "bad placement line: " + line);
  while (in >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kConfig, "bad placement field: " + word);
    const auto key = word.substr(0, eq);
    const auto value = word.substr(eq + 1);
    if (key == "type") {
      p.type = parse_project_type(value);
    } else if (key == "shards") {
      p.shards = static_cast<std::uint32_t>(std::stoul(value));
    } else if (key == "backends") {
      p.backends = split(value, ',');
    } else if (key == "active_write") {
      p.active_write = value == "1" || value == "true";
    } else if (key == "write_backend") {
      p.write_backend = value;
    } else {
      fail(ErrorCode::kConfig, "unknown placement field: " + key);
    }
  }
  return p;
}

Router::Router(std::filesystem::path placement_file) : file_(std::move(placement_file)) {}

void Router::load() {
  std::ifstream in(file_);
  if (!in) fail(ErrorCode::kConfig, "cannot read placement file " + file_.string());
  std::string line;
  std::vector<Placement> projects;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream words(line);
    std::string directive;
    if (!(words >> directive)) continue;
    if (directive == "backend") {
      BackendSpec spec;
      words >> spec.id >> spec.kind;
      if (spec.kind == "sqlite") {
        std::string path;
        words >> path;
        if (path.empty()) fail(ErrorCode::kConfig, "sqlite backend needs a path: " + line);
        spec.path = path;
      }
      add_backend(spec);
    } else if (directive == "project") {
      projects.push_back(parse_placement_line(line));
    } else {
      fail(ErrorCode::kConfig, "unknown placement directive: " + directive);
    }
  }
  for (auto& p : projects) set_placement(std::move(p));
}

void Router::save() const {
  if (file_.empty()) return;
  std::ostringstream out;
  out << "# backends and project placement\n";
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, spec] : specs_) {
      out << "backend " << id << ' ' << spec.kind;
      if (spec.kind == "sqlite") out << ' ' << spec.path.string();
      out << '\n';
    }
    for (const auto& [token, p] : placements_) out << format_placement_line(*p) << '\n';
  }
  const auto tmp = std::filesystem::path(file_.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::trunc);
    f << out.str();
    if (!f) fail(ErrorCode::kStorage, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, file_);
}

void Router::add_backend(const BackendSpec& spec) {
  if (spec.id.empty()) fail(ErrorCode::kConfig, "backend id is empty");
  std::shared_ptr<Backend> inner;
  if (spec.kind == "memory") {
    inner = std::make_shared<MemoryBackend>();
  } else if (spec.kind == "sqlite") {
    auto path = spec.path;
    if (path.is_relative() && !file_.empty()) path = file_.parent_path() / path;
    inner = std::make_shared<SqliteBackend>(path);
  } else {
    fail(ErrorCode::kConfig, "unknown backend kind: " + spec.kind);
  }
  std::lock_guard lock(mu_);
  if (backends_.count(spec.id)) fail(ErrorCode::kConflict, "duplicate backend id " + spec.id);
  backends_[spec.id] = std::make_shared<InstrumentedBackend>(std::move(inner));
  specs_[spec.id] = spec;
}

void Router::attach_backend(const std::string& id, std::shared_ptr<Backend> backend) {
  std::lock_guard lock(mu_);
  if (backends_.count(id)) fail(ErrorCode::kConflict, "duplicate backend id " + id);
  backends_[id] = std::make_shared<InstrumentedBackend>(std::move(backend));
}

bool Router::has_backend(const std::string& id) const {
  std::lock_guard lock(mu_);
  return backends_.count(id) != 0;
}

InstrumentedBackend& Router::backend(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = backends_.find(id);
  if (it == backends_.end()) fail(ErrorCode::kNotFound, "unknown backend " + id);
  return *it->second;
}

std::vector<std::string> Router::backend_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [id, b] : backends_) ids.push_back(id);
  return ids;
}

void Router::set_placement(Placement p) {
  if (p.shards == 0 || p.backends.size() != p.shards)
    fail(ErrorCode::kConfig, "placement for " + p.project + " needs one backend per shard");
  if (p.active_write && p.write_backend.empty())
    fail(ErrorCode::kConfig, "active_write placement for " + p.project + " needs a write backend");
  if (p.active_write && p.type != ProjectType::kAnnotation)
    fail(ErrorCode::kConfig, "only annotation projects use active_write placement");
  std::lock_guard lock(mu_);
  for (const auto& id : p.backends)
    if (!backends_.count(id)) fail(ErrorCode::kConfig, "placement names unknown backend " + id);
  if (!p.write_backend.empty() && !backends_.count(p.write_backend))
    fail(ErrorCode::kConfig, "placement names unknown backend " + p.write_backend);
  auto token = p.project;
  placements_[token] = std::make_shared<const Placement>(std::move(p));
}

bool Router::has_placement(const std::string& project) const {
  std::lock_guard lock(mu_);
  return placements_.count(project) != 0;
}

std::shared_ptr<const Placement> Router::placement(const std::string& project) const {
  std::lock_guard lock(mu_);
  auto it = placements_.find(project);
  if (it == placements_.end()) fail(ErrorCode::kNotFound, "no placement for project " + project);
  return it->second;
}

InstrumentedBackend& Router::route_in(const Placement& p, const CuboidKey& key) const {
  if (p.active_write) return backend(p.write_backend);
  if (p.shards == 1) return backend(p.backends.front());
  const std::uint64_t space = key_space_ ? key_space_(p.project, key.level) : 0;
  return backend(p.backends[shard_of(key.morton.value, p.shards, space)]);
}

InstrumentedBackend& Router::route(const CuboidKey& key) const { return route_in(*placement(key.project), key); }

InstrumentedBackend& Router::home(const std::string& project) const {
  const auto p = placement(project);
  return backend(p->active_write ? p->write_backend : p->backends.front());
}

std::vector<std::string> Router::backends_of(const std::string& project) const {
  const auto p = placement(project);
  std::set<std::string> ids(p->backends.begin(), p->backends.end());
  if (!p->write_backend.empty()) ids.insert(p->write_backend);
  return {ids.begin(), ids.end()};
}

void Router::migrate(const std::string& project, const std::string& from, const std::string& to,
                     MigrationFault fault) {
  const auto before = placement(project);
  if (from == to) fail(ErrorCode::kInvalid, "migration source and target are the same backend");
  const auto uses = backends_of(project);
  if (std::find(uses.begin(), uses.end(), from) == uses.end())
    fail(ErrorCode::kInvalid, "project " + project + " is not placed on backend " + from);
  auto& src = backend(from);
  auto& dst = backend(to);

  const auto prefix = keys::project_prefix(project);
  std::vector<std::string> moved;
  Fnv1a source_sum;
  WriteBatch batch;
  auto flush = [&] {
    dst.apply(batch);
    batch.ops.clear();
  };
  src.scan_prefix(prefix, [&](std::string_view k, std::string_view v) {
    source_sum.update(k);
    source_sum.update(v);
    moved.emplace_back(k);
    batch.put(std::string(k), std::string(v));
    if (batch.ops.size() >= 256) flush();
    return true;
  });
  flush();

  // Verify by reading every copied key back from the target.
  Fnv1a target_sum;
  std::size_t found = 0;
  const auto values = dst.multi_get(moved);
  for (std::size_t i = 0; i < moved.size(); ++i) {
    if (!values[i]) continue;
    ++found;
    target_sum.update(moved[i]);
    target_sum.update(*values[i]);
  }
  if (found != moved.size() || target_sum.digest() != source_sum.digest())
    fail(ErrorCode::kIntegrity, "migration verification failed for " + project + "; source left intact");

  if (fault == MigrationFault::kAfterCopy) fail(ErrorCode::kStorage, "injected failure before placement switch");

  Placement after = *before;
  if (after.write_backend == from) {
    // Leaving the fast-write node: the project settles on a single bulk backend.
    after.active_write = false;
    after.write_backend.clear();
    after.shards = 1;
    after.backends = {to};
  } else {
    std::replace(after.backends.begin(), after.backends.end(), from, to);
  }
  set_placement(after);
  save();

  if (fault == MigrationFault::kAfterSwitch) fail(ErrorCode::kStorage, "injected failure before source cleanup");

  WriteBatch cleanup;
  for (auto& k : moved) {
    cleanup.erase(std::move(k));
    if (cleanup.ops.size() >= 256) {
      src.apply(cleanup);
      cleanup.ops.clear();
    }
  }
  src.apply(cleanup);
}

std::vector<BackendUsage> Router::placement_report(const std::string& project) const {
  std::vector<BackendUsage> out;
  const auto prefix = keys::project_prefix(project);
  for (const auto& id : backends_of(project)) {
    BackendUsage u{id};
    backend(id).inner().scan_prefix(prefix, [&](std::string_view k, std::string_view v) {
      ++u.keys;
      if (keys::kind_of(k) == keys::Kind::kCuboid) ++u.cuboids;
      u.bytes += v.size();
      return true;
    });
    out.push_back(u);
  }
  return out;
}

}  // namespace ocp
