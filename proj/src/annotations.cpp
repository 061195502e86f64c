#include "ocp/annotations.hpp"

#include <algorithm>
#include <charconv>
#include <unordered_set>

#include "json.hpp"
#include "ocp/bytes.hpp"
#include "ocp/keys.hpp"

namespace ocp {

using json = nlohmann::json;

namespace {

constexpr std::array<std::string_view, 6> kTypeNames = {"seed", "synapse", "segment", "neuron", "organelle", "generic"};

std::string encode_index(const std::vector<std::uint64_t>& mortons) {
  std::string out;
  out.reserve(mortons.size() * 8);
  for (auto m : mortons) put_u64le(out, m);
  return out;
}

std::vector<std::uint64_t> decode_index(std::string_view raw) {
  if (raw.size() % 8 != 0) fail(ErrorCode::kIntegrity, "corrupt sparse index entry");
  std::vector<std::uint64_t> out(raw.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_u64le(raw.substr(i * 8));
  return out;
}

std::string string_value(std::string_view s) {
  std::string v(s);
  v.push_back('\0');
  return v;
}

bool has_label(const Cuboid& c, std::uint32_t id) {
  const std::uint64_t n = c.voxel_count();
  const std::byte* p = c.data.data();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint32_t v;
    std::memcpy(&v, p + i * 4, 4);
    if (v == id) return true;
  }
  for (const auto& [off, ids] : c.exceptions)
    if (std::find(ids.begin(), ids.end(), id) != ids.end()) return true;
  return false;
}

/// Labels of `candidates` still present anywhere in the cuboid.
std::unordered_set<std::uint32_t> labels_present(const Cuboid& c, const std::unordered_set<std::uint32_t>& candidates) {
  std::unordered_set<std::uint32_t> found;
  if (candidates.empty()) return found;
  const std::uint64_t n = c.voxel_count();
  std::uint32_t last = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint32_t v = c.label(i);
    if (v == 0 || v == last) continue;
    last = v;
    if (candidates.count(v)) found.insert(v);
  }
  for (const auto& [off, ids] : c.exceptions)
    for (auto id : ids)
      if (candidates.count(id)) found.insert(id);
  return found;
}

Extent voxel_of(const GridCoord& cell, const Extent& shape, std::uint64_t offset) {
  Extent v{};
  for (std::size_t d = 0; d < kAxes; ++d) {
    const std::uint64_t g = d < cell.dims ? cell.coords[d] : 0;
    v[d] = g * shape[d] + offset % shape[d];
    offset /= shape[d];
  }
  return v;
}

bool voxel_order(const Extent& a, const Extent& b) {
  return std::tie(a[3], a[2], a[1], a[0]) < std::tie(b[3], b[2], b[1], b[0]);
}

bool exc_has(const ExceptionList& exc, std::uint32_t offset, std::uint32_t id) {
  auto it = exc.find(offset);
  return it != exc.end() && std::find(it->second.begin(), it->second.end(), id) != it->second.end();
}

}  // namespace

std::string_view object_type_name(ObjectType t) { return kTypeNames[static_cast<std::size_t>(t)]; }

std::optional<ObjectType> parse_object_type(std::string_view name) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i)
    if (kTypeNames[i] == name) return static_cast<ObjectType>(i);
  return std::nullopt;
}

std::optional<Discipline> parse_discipline(std::string_view name) {
  if (name == "overwrite") return Discipline::kOverwrite;
  if (name == "preserve") return Discipline::kPreserve;
  if (name == "exception") return Discipline::kException;
  return std::nullopt;
}

std::string_view discipline_name(Discipline d) {
  switch (d) {
    case Discipline::kOverwrite: return "overwrite";
    case Discipline::kPreserve: return "preserve";
    case Discipline::kException: return "exception";
  }
  return "?";
}

std::optional<CompareOp> parse_compare_op(std::string_view name) {
  if (name == "eq") return CompareOp::kEq;
  if (name == "lt") return CompareOp::kLt;
  if (name == "leq") return CompareOp::kLeq;
  if (name == "gt") return CompareOp::kGt;
  if (name == "geq") return CompareOp::kGeq;
  return std::nullopt;
}

std::string_view compare_op_name(CompareOp op) {
  switch (op) {
    case CompareOp::kEq: return "eq";
    case CompareOp::kLt: return "lt";
    case CompareOp::kLeq: return "leq";
    case CompareOp::kGt: return "gt";
    case CompareOp::kGeq: return "geq";
  }
  return "?";
}

std::string to_json(const AnnotationObject& obj) {
  json j;
  j["id"] = obj.id;
  j["type"] = std::string(object_type_name(obj.type));
  j["confidence"] = obj.confidence;
  j["status"] = obj.status;
  j["author"] = obj.author;
  j["kv"] = json::object();
  for (const auto& [k, v] : obj.kv) j["kv"][k] = v;
  return j.dump();
}

AnnotationObject object_from_json(std::string_view text) {
  AnnotationObject obj;
  try {
    const auto j = json::parse(text);
    if (!j.is_object()) fail(ErrorCode::kInvalid, "annotation metadata must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "id") {
        obj.id = value.get<std::uint32_t>();
      } else if (key == "type") {
        auto t = parse_object_type(value.get<std::string>());
        if (!t) fail(ErrorCode::kInvalid, "unknown annotation type " + value.get<std::string>());
        obj.type = *t;
      } else if (key == "confidence") {
        obj.confidence = value.get<double>();
      } else if (key == "status") {
        obj.status = value.get<std::int32_t>();
      } else if (key == "author") {
        obj.author = value.get<std::string>();
      } else if (key == "kv") {
        for (const auto& [k, v] : value.items()) obj.kv[k] = v.get<std::string>();
      } else {
        fail(ErrorCode::kInvalid, "unknown metadata field " + key);
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalid, std::string("bad annotation metadata: ") + e.what());
  }
  return obj;
}

// (level, id) -> morton -> presence after the write.
struct AnnotationStore::Delta {
  std::map<std::pair<unsigned, std::uint32_t>, std::map<std::uint64_t, bool>> changes;
};

AnnotationStore::AnnotationStore(ProjectContext ctx) : store_(std::move(ctx)) {
  if (store_.context().project.type != ProjectType::kAnnotation)
    fail(ErrorCode::kInvalid, "project " + store_.context().project.token + " is not an annotation project");
}

void AnnotationStore::validate(const AnnotationWrite& w, const WriteOptions& options) const {
  const auto& ctx = store_.context();
  if (options.discipline == Discipline::kException && !ctx.project.exceptions)
    fail(ErrorCode::kConfig, "project " + ctx.project.token + " does not support exceptions");
  const auto lv = store_.level(w.level);
  const auto& o = w.object;
  if (!(o.confidence >= 0.0 && o.confidence <= 1.0)) fail(ErrorCode::kInvalid, "confidence must be in [0, 1]");
  auto check_text = [](const std::string& s) {
    if (s.find('\0') != std::string::npos) fail(ErrorCode::kInvalid, "metadata strings may not contain NUL");
  };
  check_text(o.author);
  for (const auto& [k, v] : o.kv) {
    if (k.empty()) fail(ErrorCode::kInvalid, "empty metadata key");
    check_text(k);
    check_text(v);
  }
  if (options.update && (o.id == 0 || !exists(o.id)))
    fail(ErrorCode::kNotFound, "update of unknown annotation " + std::to_string(o.id));
  if (const auto* voxels = std::get_if<VoxelList>(&w.payload)) {
    for (const auto& v : *voxels)
      if (!lv.bounds().contains(v)) fail(ErrorCode::kBounds, "annotation voxel outside the level extent");
  } else if (const auto* vol = std::get_if<DenseVolume>(&w.payload)) {
    if (vol->channels.size() != 1 || vol->data.size() != vol->channel_bytes())
      fail(ErrorCode::kInvalid, "annotation volume must be single-channel");
    if (!lv.bounds().contains(vol->box())) fail(ErrorCode::kBounds, "annotation volume outside the level extent");
  }
}

void AnnotationStore::apply_voxels(std::uint32_t id, const AnnotationWrite& w, Discipline discipline, Delta& delta) {
  const auto lv = store_.level(w.level);
  std::map<std::uint64_t, std::vector<std::uint32_t>> by_cuboid;
  auto add = [&](const Extent& v) {
    GridCoord cell;
    cell.dims = lv.curve_dims;
    Extent local{};
    for (std::size_t d = 0; d < kAxes; ++d) {
      if (d < cell.dims) cell.coords[d] = v[d] / lv.cuboid[d];
      local[d] = v[d] % lv.cuboid[d];
    }
    const auto offset = ((local[3] * lv.cuboid[2] + local[2]) * lv.cuboid[1] + local[1]) * lv.cuboid[0] + local[0];
    by_cuboid[morton_encode(cell).value].push_back(static_cast<std::uint32_t>(offset));
  };
  if (const auto* voxels = std::get_if<VoxelList>(&w.payload)) {
    for (const auto& v : *voxels) add(v);
  } else if (const auto* vol = std::get_if<DenseVolume>(&w.payload)) {
    for (std::uint64_t t = 0; t < vol->dims[3]; ++t)
      for (std::uint64_t z = 0; z < vol->dims[2]; ++z)
        for (std::uint64_t y = 0; y < vol->dims[1]; ++y)
          for (std::uint64_t x = 0; x < vol->dims[0]; ++x)
            if (vol->value_at(vol->index_of(x, y, z, t)) != 0)
              add({vol->offset[0] + x, vol->offset[1] + y, vol->offset[2] + z, vol->offset[3] + t});
  }

  for (auto& [morton, offsets] : by_cuboid) {
    const CuboidKey key = store_.key(w.level, 0, morton);
    Cuboid c = store_.get_cuboid(key, true);
    const bool before = has_label(c, id);
    std::unordered_set<std::uint32_t> overwritten;
    for (auto off : offsets) {
      const std::uint32_t cur = c.label(off);
      if (cur == id) continue;
      switch (discipline) {
        case Discipline::kOverwrite:
          if (cur != 0) overwritten.insert(cur);
          c.set_label(off, id);
          if (auto it = c.exceptions.find(off); it != c.exceptions.end()) {
            std::erase(it->second, id);
            if (it->second.empty()) c.exceptions.erase(it);
          }
          break;
        case Discipline::kPreserve:
          if (cur == 0) c.set_label(off, id);
          break;
        case Discipline::kException:
          if (cur == 0) {
            c.set_label(off, id);
          } else {
            auto& ids = c.exceptions[off];
            if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
          }
          break;
      }
    }
    auto candidates = overwritten;
    candidates.insert(id);
    const auto present = labels_present(c, candidates);
    for (auto old : overwritten)
      if (!present.count(old)) delta.changes[{w.level, old}][morton] = false;
    const bool after = present.count(id) != 0;
    if (after != before) delta.changes[{w.level, id}][morton] = after;
    store_.put_cuboid(key, c);
  }
}

std::uint32_t AnnotationStore::read_counter() const {
  const auto& token = store_.context().project.token;
  auto raw = store_.context().router->home(token).get(keys::counter(token));
  return raw && raw->size() == 4 ? get_u32le(*raw) : 0;
}

void AnnotationStore::field_entries(const AnnotationObject& obj, std::vector<std::string>& out) const {
  const auto& token = store_.context().project.token;
  out.push_back(keys::field(token, "type", string_value(object_type_name(obj.type)), obj.id));
  out.push_back(keys::field(token, "status", string_value(std::to_string(obj.status)), obj.id));
  out.push_back(keys::field(token, "author", string_value(obj.author), obj.id));
  out.push_back(keys::field(token, "confidence", keys::ordered_double(obj.confidence), obj.id));
  for (const auto& [k, v] : obj.kv) out.push_back(keys::field(token, "kv:" + k, string_value(v), obj.id));
}

void AnnotationStore::commit(const Delta& delta, const std::vector<AnnotationObject>& metadata,
                             std::uint32_t counter) {
  const auto& token = store_.context().project.token;
  auto& home = store_.context().router->home(token);

  std::vector<std::string> read_keys;
  for (const auto& [lid, changes] : delta.changes) read_keys.push_back(keys::index(token, lid.first, lid.second));
  for (const auto& obj : metadata) read_keys.push_back(keys::meta(token, obj.id));
  std::vector<std::optional<std::string>> current;
  if (!read_keys.empty()) current = home.multi_get(read_keys);

  WriteBatch batch;
  std::size_t i = 0;
  for (const auto& [lid, changes] : delta.changes) {
    auto& raw = current[i];
    std::vector<std::uint64_t> entry = raw ? decode_index(*raw) : std::vector<std::uint64_t>{};
    for (const auto& [morton, present] : changes) {
      auto it = std::lower_bound(entry.begin(), entry.end(), morton);
      const bool listed = it != entry.end() && *it == morton;
      if (present && !listed) entry.insert(it, morton);
      if (!present && listed) entry.erase(it);
    }
    if (entry.empty())
      batch.erase(read_keys[i]);
    else
      batch.put(read_keys[i], encode_index(entry));
    ++i;
  }
  // Later records for the same id win, as with sequential writes.
  std::map<std::uint32_t, std::optional<std::string>> old_meta;
  for (const auto& obj : metadata) {
    if (!old_meta.count(obj.id)) old_meta[obj.id] = current[i];
    ++i;
  }
  std::map<std::uint32_t, const AnnotationObject*> latest;
  for (const auto& obj : metadata) latest[obj.id] = &obj;
  for (const auto& [id, obj] : latest) {
    std::vector<std::string> stale;
    if (const auto& old = old_meta[id]) field_entries(object_from_json(*old), stale);
    for (auto& k : stale) batch.erase(std::move(k));
    batch.put(keys::meta(token, id), to_json(*obj));
    std::vector<std::string> fresh;
    field_entries(*obj, fresh);
    for (auto& k : fresh) batch.put(std::move(k), "");
  }
  std::string c;
  put_u32le(c, counter);
  batch.put(keys::counter(token), c);
  home.apply(batch);
}

std::uint32_t AnnotationStore::write_annotation(AnnotationWrite write, const WriteOptions& options) {
  std::vector<AnnotationWrite> one;
  one.push_back(std::move(write));
  return batch_write(std::move(one), options).front();
}

std::vector<std::uint32_t> AnnotationStore::batch_write(std::vector<AnnotationWrite> writes,
                                                        const WriteOptions& options) {
  store_.check_writable();
  if (writes.empty()) return {};
  for (const auto& w : writes) validate(w, options);

  std::lock_guard lock(store_.context().state->write_mu);
  std::uint32_t counter = read_counter();
  std::vector<std::uint32_t> ids;
  for (auto& w : writes) {
    if (w.object.id == 0) {
      if (counter == 0xFFFFFFFFu) fail(ErrorCode::kOutOfRange, "annotation id space exhausted");
      w.object.id = ++counter;
    } else {
      counter = std::max(counter, w.object.id);
    }
    ids.push_back(w.object.id);
  }
  Delta delta;
  for (const auto& w : writes) apply_voxels(w.object.id, w, options.discipline, delta);
  std::vector<AnnotationObject> metadata;
  if (!options.dataonly)
    for (const auto& w : writes) metadata.push_back(w.object);
  commit(delta, metadata, counter);
  return ids;
}

AnnotationObject AnnotationStore::object(std::uint32_t id) const {
  const auto& token = store_.context().project.token;
  auto raw = store_.context().router->home(token).get(keys::meta(token, id));
  if (!raw) fail(ErrorCode::kNotFound, "no annotation " + std::to_string(id));
  return object_from_json(*raw);
}

bool AnnotationStore::exists(std::uint32_t id) const {
  const auto& token = store_.context().project.token;
  return store_.context().router->home(token).get(keys::meta(token, id)).has_value();
}

std::vector<AnnotationObject> AnnotationStore::batch_read(std::span<const std::uint32_t> ids) const {
  const auto& token = store_.context().project.token;
  std::vector<std::string> k;
  for (auto id : ids) k.push_back(keys::meta(token, id));
  const auto values = store_.context().router->home(token).multi_get(k);
  std::vector<AnnotationObject> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!values[i]) fail(ErrorCode::kNotFound, "no annotation " + std::to_string(ids[i]));
    out.push_back(object_from_json(*values[i]));
  }
  return out;
}

std::vector<std::uint64_t> AnnotationStore::index_entry(std::uint32_t id, unsigned level) const {
  const auto& token = store_.context().project.token;
  auto raw = store_.context().router->home(token).get(keys::index(token, level, id));
  if (!raw) return {};
  auto entry = decode_index(*raw);
  std::sort(entry.begin(), entry.end());
  return entry;
}

std::map<std::uint32_t, std::vector<std::uint64_t>> AnnotationStore::index_entries(unsigned level) const {
  const auto& token = store_.context().project.token;
  std::map<std::uint32_t, std::vector<std::uint64_t>> out;
  store_.context().router->home(token).scan_prefix(keys::index_level_prefix(token, level),
                                                   [&](std::string_view k, std::string_view v) {
                                                     out[keys::trailing_id(k)] = decode_index(v);
                                                     return true;
                                                   });
  return out;
}

VoxelList AnnotationStore::object_voxels(std::uint32_t id, unsigned level) const {
  const auto lv = store_.level(level);
  const auto entry = index_entry(id, level);
  VoxelList out;
  if (entry.empty()) return out;
  const auto cuboids = store_.fetch(level, 0, entry, true);
  for (std::size_t i = 0; i < entry.size(); ++i) {
    if (!cuboids[i]) continue;
    const auto& c = *cuboids[i];
    const auto cell = morton_decode(MortonKey{entry[i], lv.curve_dims});
    const std::uint64_t n = c.voxel_count();
    for (std::uint64_t off = 0; off < n; ++off)
      if (c.label(off) == id) out.push_back(voxel_of(cell, lv.cuboid, off));
    for (const auto& [off, ids] : c.exceptions)
      if (std::find(ids.begin(), ids.end(), id) != ids.end()) out.push_back(voxel_of(cell, lv.cuboid, off));
  }
  std::sort(out.begin(), out.end(), voxel_order);
  return out;
}

Box AnnotationStore::object_bounding_box(std::uint32_t id, unsigned level) const {
  const auto lv = store_.level(level);
  const auto entry = index_entry(id, level);
  if (entry.empty()) fail(ErrorCode::kNotFound, "annotation " + std::to_string(id) + " has no voxels at level " +
                                                    std::to_string(level));
  Box box = cuboid_box(morton_decode(MortonKey{entry.front(), lv.curve_dims}), lv);
  for (auto m : entry) {
    const Box b = cuboid_box(morton_decode(MortonKey{m, lv.curve_dims}), lv);
    for (std::size_t d = 0; d < kAxes; ++d) {
      box.lo[d] = std::min(box.lo[d], b.lo[d]);
      box.hi[d] = std::max(box.hi[d], b.hi[d]);
    }
  }
  return intersect(box, lv.bounds());
}

DenseVolume AnnotationStore::object_cutout(std::uint32_t id, unsigned level, std::optional<Box> region) const {
  const auto lv = store_.level(level);
  const auto entry = index_entry(id, level);
  if (entry.empty() && !exists(id)) fail(ErrorCode::kNotFound, "no annotation " + std::to_string(id));
  const Box box = region ? intersect(*region, lv.bounds()) : object_bounding_box(id, level);
  if (box.empty()) fail(ErrorCode::kBounds, "cutout region lies outside the dataset extent");

  DenseVolume vol = DenseVolume::zeros(VoxelType::kLabel32, box, {0}, lv.curve_dims);
  std::vector<std::uint64_t> wanted;
  for (auto m : entry)
    if (!intersect(cuboid_box(morton_decode(MortonKey{m, lv.curve_dims}), lv), box).empty()) wanted.push_back(m);
  const auto cuboids = store_.fetch(level, 0, wanted, true);
  for (std::size_t i = 0; i < wanted.size(); ++i) {
    if (!cuboids[i]) continue;
    const auto& c = *cuboids[i];
    const Box cb = cuboid_box(morton_decode(MortonKey{wanted[i], lv.curve_dims}), lv);
    const Box part = intersect(cb, box);
    for (std::uint64_t t = part.lo[3]; t < part.hi[3]; ++t)
      for (std::uint64_t z = part.lo[2]; z < part.hi[2]; ++z)
        for (std::uint64_t y = part.lo[1]; y < part.hi[1]; ++y)
          for (std::uint64_t x = part.lo[0]; x < part.hi[0]; ++x) {
            const auto off = c.offset_of(x - cb.lo[0], y - cb.lo[1], z - cb.lo[2], t - cb.lo[3]);
            if (c.label(off) == id || exc_has(c.exceptions, static_cast<std::uint32_t>(off), id))
              vol.set_label_at(vol.index_of(x - box.lo[0], y - box.lo[1], z - box.lo[2], t - box.lo[3]), id);
          }
  }
  return vol;
}

std::set<std::uint32_t> AnnotationStore::ids_in_region(unsigned level, const Box& region) const {
  const auto lv = store_.level(level);
  const Box box = intersect(region, lv.bounds());
  std::set<std::uint32_t> out;
  if (box.empty()) return out;
  const auto spans = cuboids_for_region(box, lv);
  std::vector<std::uint64_t> mortons;
  for (const auto& s : spans) mortons.push_back(s.key.value);
  const auto cuboids = store_.fetch(level, 0, mortons, true);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (!cuboids[i]) continue;
    const auto& c = *cuboids[i];
    const Box& cb = spans[i].cuboid_box;
    const Box& part = spans[i].intersection;
    std::uint32_t last = 0;
    for (std::uint64_t t = part.lo[3]; t < part.hi[3]; ++t)
      for (std::uint64_t z = part.lo[2]; z < part.hi[2]; ++z)
        for (std::uint64_t y = part.lo[1]; y < part.hi[1]; ++y)
          for (std::uint64_t x = part.lo[0]; x < part.hi[0]; ++x) {
            const auto v = c.label(c.offset_of(x - cb.lo[0], y - cb.lo[1], z - cb.lo[2], t - cb.lo[3]));
            if (v != 0 && v != last) {
              out.insert(v);
              last = v;
            }
          }
    for (const auto& [off, ids] : c.exceptions) {
      const Extent p = voxel_of(spans[i].cell, lv.cuboid, off);
      if (part.contains(p)) out.insert(ids.begin(), ids.end());
    }
  }
  return out;
}

DenseVolume AnnotationStore::filter_cutout(unsigned level, const Box& region,
                                           const std::set<std::uint32_t>& keep) const {
  DenseVolume vol = store_.read_cutout(level, VoxelRegion{region, {}});
  const std::uint64_t n = vol.voxel_count();
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto v = vol.label_at(i);
    if (v != 0 && !keep.count(v)) vol.set_label_at(i, 0);
  }
  return vol;
}

std::set<std::uint32_t> AnnotationStore::ids_matching(const Predicate& p) const {
  const auto& token = store_.context().project.token;
  auto& home = store_.context().router->home(token);
  std::set<std::uint32_t> out;
  auto scan = [&](const std::string& lo, const std::string& hi) {
    home.scan(lo, hi, [&](std::string_view k, std::string_view) {
      out.insert(keys::trailing_id(k));
      return true;
    });
  };
  auto equality_only = [&] {
    if (p.op != CompareOp::kEq) fail(ErrorCode::kInvalid, "field " + p.field + " supports equality only");
  };

  if (p.field == "type") {
    equality_only();
    if (!parse_object_type(p.value)) fail(ErrorCode::kInvalid, "unknown annotation type " + p.value);
    const auto prefix = keys::field_value_prefix(token, "type", string_value(p.value));
    scan(prefix, keys::prefix_end(prefix));
  } else if (p.field == "status") {
    equality_only();
    std::int32_t status = 0;
    const auto* end = p.value.data() + p.value.size();
    auto [ptr, ec] = std::from_chars(p.value.data(), end, status);
    if (ec != std::errc() || ptr != end) fail(ErrorCode::kInvalid, "status must be an integer");
    const auto prefix = keys::field_value_prefix(token, "status", string_value(std::to_string(status)));
    scan(prefix, keys::prefix_end(prefix));
  } else if (p.field == "author") {
    equality_only();
    const auto prefix = keys::field_value_prefix(token, "author", string_value(p.value));
    scan(prefix, keys::prefix_end(prefix));
  } else if (p.field == "kv") {
    equality_only();
    if (p.key.empty()) fail(ErrorCode::kInvalid, "kv predicate needs a key");
    const auto prefix = keys::field_value_prefix(token, "kv:" + p.key, string_value(p.value));
    scan(prefix, keys::prefix_end(prefix));
  } else if (p.field == "confidence") {
    double v = 0;
    try {
      std::size_t used = 0;
      v = std::stod(p.value, &used);
      if (used != p.value.size()) throw std::invalid_argument(p.value);
    } catch (const std::exception&) {
      fail(ErrorCode::kInvalid, "confidence must be a number: " + p.value);
    }
    const auto field = keys::field_prefix(token, "confidence");
    const auto at = field + keys::ordered_double(v);
    switch (p.op) {
      case CompareOp::kEq: scan(at, keys::prefix_end(at)); break;
      case CompareOp::kLt: scan(field, at); break;
      case CompareOp::kLeq: scan(field, keys::prefix_end(at)); break;
      case CompareOp::kGt: scan(keys::prefix_end(at), keys::prefix_end(field)); break;
      case CompareOp::kGeq: scan(at, keys::prefix_end(field)); break;
    }
  } else {
    fail(ErrorCode::kInvalid, "unknown metadata field " + p.field);
  }
  return out;
}

std::vector<std::uint32_t> AnnotationStore::query_objects(const std::vector<Predicate>& predicates) const {
  if (predicates.empty()) return all_ids();
  std::set<std::uint32_t> result = ids_matching(predicates.front());
  for (std::size_t i = 1; i < predicates.size(); ++i) {
    const auto next = ids_matching(predicates[i]);
    std::set<std::uint32_t> both;
    std::set_intersection(result.begin(), result.end(), next.begin(), next.end(), std::inserter(both, both.end()));
    result = std::move(both);
  }
  return {result.begin(), result.end()};
}

std::vector<std::uint32_t> AnnotationStore::all_ids() const {
  const auto& token = store_.context().project.token;
  std::vector<std::uint32_t> out;
  store_.context().router->home(token).scan_prefix(keys::meta_prefix(token), [&](std::string_view k, std::string_view) {
    out.push_back(keys::trailing_id(k));
    return true;
  });
  return out;
}

void AnnotationStore::delete_annotation(std::uint32_t id) {
  store_.check_writable();
  const auto& ctx = store_.context();
  std::lock_guard lock(ctx.state->write_mu);
  const auto& token = ctx.project.token;
  auto& home = ctx.router->home(token);
  const auto old_meta = home.get(keys::meta(token, id));

  bool found = old_meta.has_value();
  WriteBatch batch;
  for (unsigned level = 0; level < ctx.dataset.levels; ++level) {
    const auto entry = index_entry(id, level);
    if (entry.empty()) continue;
    found = true;
    auto cuboids = store_.fetch(level, 0, entry, true);
    for (std::size_t i = 0; i < entry.size(); ++i) {
      if (!cuboids[i]) continue;
      Cuboid& c = *cuboids[i];
      const std::uint64_t n = c.voxel_count();
      for (std::uint64_t off = 0; off < n; ++off) {
        if (c.label(off) != id) continue;
        // A multiply-labeled voxel keeps its next label.
        auto it = c.exceptions.find(static_cast<std::uint32_t>(off));
        if (it != c.exceptions.end() && !it->second.empty()) {
          c.set_label(off, it->second.front());
          it->second.erase(it->second.begin());
          if (it->second.empty()) c.exceptions.erase(it);
        } else {
          c.set_label(off, 0);
        }
      }
      for (auto it = c.exceptions.begin(); it != c.exceptions.end();) {
        std::erase(it->second, id);
        it = it->second.empty() ? c.exceptions.erase(it) : std::next(it);
      }
      store_.put_cuboid(store_.key(level, 0, entry[i]), c);
    }
    batch.erase(keys::index(token, level, id));
  }
  if (!found) fail(ErrorCode::kNotFound, "no annotation " + std::to_string(id));
  if (old_meta) {
    std::vector<std::string> stale;
    field_entries(object_from_json(*old_meta), stale);
    for (auto& k : stale) batch.erase(std::move(k));
    batch.erase(keys::meta(token, id));
  }
  home.apply(batch);
}

void AnnotationStore::rebuild_index(unsigned level) {
  const auto& token = store_.context().project.token;
  auto& home = store_.context().router->home(token);
  std::map<std::uint32_t, std::vector<std::uint64_t>> entries;
  store_.scan_level(level, 0, [&](std::uint64_t morton, Cuboid&& c) {
    std::set<std::uint32_t> ids;
    const std::uint64_t n = c.voxel_count();
    std::uint32_t last = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto v = c.label(i);
      if (v != 0 && v != last) {
        ids.insert(v);
        last = v;
      }
    }
    for (const auto& [off, list] : c.exceptions) ids.insert(list.begin(), list.end());
    for (auto id : ids) entries[id].push_back(morton);
  });
  WriteBatch batch;
  home.scan_prefix(keys::index_level_prefix(token, level), [&](std::string_view k, std::string_view) {
    if (!entries.count(keys::trailing_id(k))) batch.erase(std::string(k));
    return true;
  });
  for (const auto& [id, mortons] : entries) batch.put(keys::index(token, level, id), encode_index(mortons));
  home.apply(batch);
}

}  // namespace ocp
