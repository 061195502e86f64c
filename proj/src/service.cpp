#include "ocp/service.hpp"

#include <charconv>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "ocp/wire.hpp"

namespace ocp {

using json = nlohmann::json;

namespace {

std::string percent_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%') {
      if (i + 2 >= s.size()) fail(ErrorCode::kInvalid, "bad percent escape in URL");
      int v = 0;
      auto [p, ec] = std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16);
      if (ec != std::errc() || p != s.data() + i + 3) fail(ErrorCode::kInvalid, "bad percent escape in URL");
      out.push_back(static_cast<char>(v));
      i += 2;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

std::string percent_encode(std::string_view s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 15]);
    }
  }
  return out;
}

std::uint64_t parse_uint(std::string_view s, std::string_view what) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size())
    fail(ErrorCode::kInvalid, "bad " + std::string(what) + ": '" + std::string(s) + "'");
  return v;
}

std::uint32_t parse_u32(std::string_view s, std::string_view what) {
  const auto v = parse_uint(s, what);
  if (v > 0xFFFFFFFFu) fail(ErrorCode::kInvalid, std::string(what) + " out of range");
  return static_cast<std::uint32_t>(v);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::pair<std::uint64_t, std::uint64_t> parse_range(std::string_view s) {
  const auto parts = split(s, ',');
  if (parts.size() != 2) fail(ErrorCode::kInvalid, "range must be 'lo,hi': " + std::string(s));
  const auto lo = parse_uint(parts[0], "range bound"), hi = parse_uint(parts[1], "range bound");
  if (lo >= hi) fail(ErrorCode::kInvalid, "empty range " + std::string(s));
  return {lo, hi};
}

std::vector<std::uint32_t> parse_id_list(std::string_view s) {
  std::vector<std::uint32_t> ids;
  for (auto part : split(s, ',')) ids.push_back(parse_u32(part, "id"));
  return ids;
}

std::string join_ids(const std::vector<std::uint32_t>& ids) { return id_list_text(ids); }

/// Ranges starting at segs[i]: three or four of them.
std::size_t parse_box(const std::vector<std::string>& segs, std::size_t i, Route& r) {
  if (segs.size() < i + 3) fail(ErrorCode::kInvalid, "cutout needs x, y and z ranges");
  if (segs.size() > i + 4) fail(ErrorCode::kInvalid, "too many cutout ranges");
  Box b;
  for (std::size_t d = 0; d + i < segs.size(); ++d) {
    const auto [lo, hi] = parse_range(segs[i + d]);
    b.lo[d] = lo;
    b.hi[d] = hi;
  }
  r.has_time_range = segs.size() == i + 4;
  r.box = b;
  return segs.size();
}

std::string render_box(const Box& b, bool with_time) {
  std::string out;
  for (std::size_t d = 0; d < (with_time ? 4u : 3u); ++d)
    out += std::to_string(b.lo[d]) + "," + std::to_string(b.hi[d]) + "/";
  return out;
}

std::map<std::string, std::string> parse_query(std::string_view q) {
  std::map<std::string, std::string> out;
  if (q.empty()) return out;
  for (auto kv : split(q, '&')) {
    if (kv.empty()) continue;
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos)
      out[percent_decode(kv)] = "";
    else
      out[percent_decode(kv.substr(0, eq))] = percent_decode(kv.substr(eq + 1));
  }
  return out;
}

void apply_write_word(Route& r, const std::string& word) {
  if (auto d = parse_discipline(word)) {
    r.write.discipline = *d;
    r.discipline_given = true;
  } else if (word == "update") {
    r.write.update = true;
  } else if (word == "dataonly") {
    r.write.dataonly = true;
  } else {
    fail(ErrorCode::kInvalid, "unknown write option " + word);
  }
}

json placement_json(const Placement& p) {
  return {{"shards", p.shards},
          {"backends", p.backends},
          {"active_write", p.active_write},
          {"write_backend", p.write_backend}};
}

AnnotationWrite write_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::kInvalid, "annotation must be a JSON object");
  json meta = j;
  AnnotationWrite w;
  if (meta.contains("level")) {
    w.level = meta["level"].get<unsigned>();
    meta.erase("level");
  }
  if (meta.contains("voxels")) {
    VoxelList voxels;
    for (const auto& v : meta["voxels"]) {
      if (!v.is_array() || v.size() < 3 || v.size() > 4) fail(ErrorCode::kInvalid, "voxels are [x,y,z(,t)]");
      Extent e{0, 0, 0, 0};
      for (std::size_t d = 0; d < v.size(); ++d) e[d] = v[d].get<std::uint64_t>();
      voxels.push_back(e);
    }
    w.payload = std::move(voxels);
    meta.erase("voxels");
  }
  w.object = object_from_json(meta.dump());
  return w;
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kBounds: return 416;
    case ErrorCode::kInvalid:
    case ErrorCode::kAlignment:
    case ErrorCode::kOutOfRange: return 400;
    case ErrorCode::kConflict:
    case ErrorCode::kConfig:
    case ErrorCode::kLocked: return 409;
    case ErrorCode::kPermission: return 403;
    case ErrorCode::kStorage:
    case ErrorCode::kIntegrity: return 500;
  }
  return 500;
}

bool Route::operator==(const Route& o) const {
  auto same_preds = [&] {
    if (predicates.size() != o.predicates.size()) return false;
    for (std::size_t i = 0; i < predicates.size(); ++i) {
      const auto &a = predicates[i], &b = o.predicates[i];
      if (a.field != b.field || a.key != b.key || a.op != b.op || a.value != b.value) return false;
    }
    return true;
  };
  auto same_tile = [&] {
    return tile.level == o.tile.level && tile.slice == o.tile.slice && tile.row == o.tile.row &&
           tile.col == o.tile.col && tile.plane == o.tile.plane;
  };
  return kind == o.kind && token == o.token && create == o.create && hdf5_alias == o.hdf5_alias && level == o.level && box == o.box &&
         has_time_range == o.has_time_range && channels == o.channels && ids == o.ids && option == o.option &&
         same_preds() && write.discipline == o.write.discipline && write.update == o.write.update &&
         write.dataonly == o.write.dataonly && discipline_given == o.discipline_given && same_tile() &&
         plane_given == o.plane_given && tile_channel == o.tile_channel;
}

Route parse_route(const std::string& method, const std::string& target) {
  const auto qpos = target.find('?');
  const std::string_view path = std::string_view(target).substr(0, qpos);
  const auto query = parse_query(qpos == std::string::npos ? std::string_view() : std::string_view(target).substr(qpos + 1));
  std::vector<std::string> segs;
  for (auto s : split(path, '/'))
    if (!s.empty()) segs.push_back(percent_decode(s));
  if (segs.empty()) fail(ErrorCode::kNotFound, "no route for /");

  Route r;
  const bool get = method == "GET" || method == "HEAD";
  const bool put = method == "PUT" || method == "POST";

  if (segs[0] == "admin") {
    if (segs.size() != 3 || (!get && !put)) fail(ErrorCode::kNotFound, "unknown admin route");
    if (segs[1] == "datasets")
      r.kind = Route::Kind::kAdminDataset;
    else if (segs[1] == "projects")
      r.kind = Route::Kind::kAdminProject;
    else
      fail(ErrorCode::kNotFound, "unknown admin collection " + segs[1]);
    r.token = segs[2];
    r.create = put;
    return r;
  }

  if (segs[0] == "tiles") {
    if (!get) fail(ErrorCode::kNotFound, "tiles are read-only");
    if (segs.size() != 5) fail(ErrorCode::kInvalid, "tile path is /tiles/<token>/<res>/<slice>/<row>_<col>.png");
    r.kind = Route::Kind::kTile;
    r.token = segs[1];
    r.tile.level = parse_u32(segs[2], "resolution");
    r.tile.slice = parse_uint(segs[3], "slice");
    std::string_view name = segs[4];
    if (name.size() < 4 || name.substr(name.size() - 4) != ".png") fail(ErrorCode::kInvalid, "tiles end in .png");
    const auto rc = split(name.substr(0, name.size() - 4), '_');
    if (rc.size() != 2) fail(ErrorCode::kInvalid, "tile name is <row>_<col>.png");
    r.tile.row = parse_uint(rc[0], "tile row");
    r.tile.col = parse_uint(rc[1], "tile column");
    for (const auto& [k, v] : query) {
      if (k == "plane") {
        auto p = parse_tile_plane(v);
        if (!p) fail(ErrorCode::kInvalid, "plane is xy, xz or yz");
        r.tile.plane = *p;
        r.plane_given = true;
      } else if (k == "channel") {
        r.tile_channel = parse_u32(v, "channel");
      } else {
        fail(ErrorCode::kInvalid, "unknown tile parameter " + k);
      }
    }
    return r;
  }

  r.token = segs[0];
  if (put) {
    r.kind = Route::Kind::kWrite;
    for (std::size_t i = 1; i < segs.size(); ++i) apply_write_word(r, segs[i]);
    for (const auto& [k, v] : query) {
      if (k == "discipline") {
        if (!parse_discipline(v)) fail(ErrorCode::kInvalid, "unknown discipline " + v);
        apply_write_word(r, v);
      } else if ((k == "update" || k == "dataonly") && (v.empty() || v == "1" || v == "true")) {
        apply_write_word(r, k);
      } else {
        fail(ErrorCode::kInvalid, "unknown write parameter " + k);
      }
    }
    return r;
  }
  if (method == "DELETE") {
    if (segs.size() != 2) fail(ErrorCode::kInvalid, "delete path is /<token>/<id>/");
    r.kind = Route::Kind::kDelete;
    r.ids = {parse_u32(segs[1], "id")};
    return r;
  }
  if (!get) fail(ErrorCode::kNotFound, "unsupported method " + method);
  if (segs.size() < 2) fail(ErrorCode::kNotFound, "no route for /" + segs[0] + "/");

  if (segs[1] == "cutout" || segs[1] == "hdf5") {
    r.kind = Route::Kind::kCutout;
    r.hdf5_alias = segs[1] == "hdf5";
    if (segs.size() < 3) fail(ErrorCode::kInvalid, "cutout needs a resolution");
    r.level = parse_u32(segs[2], "resolution");
    parse_box(segs, 3, r);
    for (const auto& [k, v] : query) {
      if (k != "channels") fail(ErrorCode::kInvalid, "unknown cutout parameter " + k);
      for (auto c : split(v, ',')) r.channels.push_back(parse_u32(c, "channel"));
    }
    return r;
  }

  if (segs[1] == "objects") {
    r.kind = Route::Kind::kQuery;
    for (std::size_t i = 2; i < segs.size();) {
      Predicate p;
      p.field = segs[i++];
      if (p.field == "kv") {
        if (i + 2 > segs.size()) fail(ErrorCode::kInvalid, "kv predicate is kv/<key>/<value>");
        p.key = segs[i++];
        p.value = segs[i++];
      } else {
        if (i >= segs.size()) fail(ErrorCode::kInvalid, "predicate " + p.field + " has no value");
        if (auto op = parse_compare_op(segs[i]); op && i + 1 < segs.size()) {
          p.op = *op;
          ++i;
        }
        p.value = segs[i++];
      }
      r.predicates.push_back(std::move(p));
    }
    return r;
  }

  r.kind = Route::Kind::kObject;
  r.ids = parse_id_list(segs[1]);
  if (segs.size() == 2) return r;
  const std::string& opt = segs[2];
  if (opt == "voxels" || opt == "boundingbox") {
    r.option = opt == "voxels" ? Route::Option::kVoxels : Route::Option::kBoundingBox;
    if (segs.size() > 4) fail(ErrorCode::kInvalid, "too many segments after " + opt);
    if (segs.size() == 4) r.level = parse_u32(segs[3], "resolution");
    return r;
  }
  if (opt == "cutout") {
    r.option = Route::Option::kCutout;
    if (segs.size() >= 4) r.level = parse_u32(segs[3], "resolution");
    if (segs.size() >= 5) parse_box(segs, 4, r);
    return r;
  }
  fail(ErrorCode::kInvalid, "unknown data option " + opt);
}

std::string render_route(const Route& r) {
  std::string out;
  std::vector<std::string> query;
  switch (r.kind) {
    case Route::Kind::kCutout:
      out = "/" + percent_encode(r.token) + (r.hdf5_alias ? "/hdf5/" : "/cutout/") + std::to_string(r.level.value_or(0)) +
            "/" + render_box(r.box.value_or(Box{}), r.has_time_range);
      if (!r.channels.empty()) query.push_back("channels=" + join_ids(r.channels));
      break;
    case Route::Kind::kObject:
      out = "/" + percent_encode(r.token) + "/" + join_ids(r.ids) + "/";
      switch (r.option) {
        case Route::Option::kMetadata: break;
        case Route::Option::kVoxels:
        case Route::Option::kBoundingBox:
          out += r.option == Route::Option::kVoxels ? "voxels/" : "boundingbox/";
          if (r.level) out += std::to_string(*r.level) + "/";
          break;
        case Route::Option::kCutout:
          out += "cutout/";
          if (r.level) out += std::to_string(*r.level) + "/";
          if (r.box) out += render_box(*r.box, r.has_time_range);
          break;
      }
      break;
    case Route::Kind::kQuery:
      out = "/" + percent_encode(r.token) + "/objects/";
      for (const auto& p : r.predicates) {
        out += percent_encode(p.field) + "/";
        if (p.field == "kv") out += percent_encode(p.key) + "/";
        else if (p.op != CompareOp::kEq) out += std::string(compare_op_name(p.op)) + "/";
        out += percent_encode(p.value) + "/";
      }
      break;
    case Route::Kind::kWrite:
      out = "/" + percent_encode(r.token) + "/";
      if (r.discipline_given) query.push_back("discipline=" + std::string(discipline_name(r.write.discipline)));
      if (r.write.update) query.push_back("update");
      if (r.write.dataonly) query.push_back("dataonly");
      break;
    case Route::Kind::kDelete:
      out = "/" + percent_encode(r.token) + "/" + join_ids(r.ids) + "/";
      break;
    case Route::Kind::kAdminDataset:
      out = "/admin/datasets/" + percent_encode(r.token) + "/";
      break;
    case Route::Kind::kAdminProject:
      out = "/admin/projects/" + percent_encode(r.token) + "/";
      break;
    case Route::Kind::kTile:
      out = "/tiles/" + percent_encode(r.token) + "/" + std::to_string(r.tile.level) + "/" +
            std::to_string(r.tile.slice) + "/" + std::to_string(r.tile.row) + "_" + std::to_string(r.tile.col) +
            ".png";
      if (r.plane_given) query.push_back("plane=" + std::string(tile_plane_name(r.tile.plane)));
      if (r.tile_channel) query.push_back("channel=" + std::to_string(*r.tile_channel));
      break;
  }
  for (std::size_t i = 0; i < query.size(); ++i) out += (i ? "&" : "?") + query[i];
  return out;
}

HttpResponse Service::handle(const HttpRequest& req) {
  try {
    const Route r = parse_route(req.method, req.target);
    return dispatch(r, req.body);
  } catch (const Error& e) {
    return {http_status(e.code()), "text/plain", std::string(error_code_name(e.code())) + ": " + e.what() + "\n"};
  } catch (const json::exception& e) {
    return {400, "text/plain", std::string("invalid: ") + e.what() + "\n"};
  } catch (const std::exception& e) {
    return {500, "text/plain", std::string("internal: ") + e.what() + "\n"};
  }
}

HttpResponse Service::dispatch(const Route& r, const std::string& body) {
  switch (r.kind) {
    case Route::Kind::kCutout: return cutout(r);
    case Route::Kind::kObject: return object(r);
    case Route::Kind::kQuery: return query(r);
    case Route::Kind::kWrite: return write(r, body);
    case Route::Kind::kDelete: return erase(r);
    case Route::Kind::kAdminDataset:
    case Route::Kind::kAdminProject: return admin(r, r.create, body);
    case Route::Kind::kTile: return tile(r);
  }
  fail(ErrorCode::kNotFound, "unknown route");
}

HttpResponse Service::cutout(const Route& r) {
  const CuboidStore store = engine_.store(r.token);
  const DenseVolume vol = store.read_cutout(*r.level, VoxelRegion{*r.box, r.channels});
  return {200, "application/octet-stream", encode_ocpb_channels(vol)};
}

HttpResponse Service::object(const Route& r) {
  const AnnotationStore ann = engine_.annotations(r.token);
  const auto& ctx = ann.store().context();
  const unsigned level = r.level.value_or(ctx.project.annotation_level);
  ann.store().level(level);
  const unsigned ndim = ctx.dataset.has_time ? 4 : 3;

  auto known = [&](std::uint32_t id) {
    if (!ann.exists(id) && ann.index_entry(id, level).empty())
      fail(ErrorCode::kNotFound, "no annotation " + std::to_string(id));
  };
  auto payload_of = [&](std::uint32_t id) -> std::pair<PayloadKind, std::string> {
    switch (r.option) {
      case Route::Option::kMetadata: return {PayloadKind::kNone, {}};
      case Route::Option::kVoxels: return {PayloadKind::kVoxels, encode_voxel_list(ann.object_voxels(id, level), ndim)};
      case Route::Option::kBoundingBox: return {PayloadKind::kNone, box_to_json(ann.object_bounding_box(id, level), ndim)};
      case Route::Option::kCutout: return {PayloadKind::kVolume, encode_ocpb(ann.object_cutout(id, level, r.box))};
    }
    return {PayloadKind::kNone, {}};
  };

  if (r.ids.size() == 1) {
    const auto id = r.ids.front();
    known(id);
    switch (r.option) {
      case Route::Option::kMetadata: return {200, "application/json", to_json(ann.object(id))};
      case Route::Option::kBoundingBox: return {200, "application/json", payload_of(id).second};
      default: return {200, "application/octet-stream", payload_of(id).second};
    }
  }
  // Batch: every id must exist before anything is returned.
  for (auto id : r.ids) known(id);
  if (r.option == Route::Option::kBoundingBox) {
    json j = json::object();
    for (auto id : r.ids) j[std::to_string(id)] = json::parse(payload_of(id).second);
    return {200, "application/json", j.dump()};
  }
  std::vector<AnnotationRecord> records;
  for (auto id : r.ids) {
    AnnotationRecord rec;
    AnnotationObject bare;
    bare.id = id;
    rec.metadata = to_json(ann.exists(id) ? ann.object(id) : bare);
    std::tie(rec.kind, rec.payload) = payload_of(id);
    rec.level = level;
    records.push_back(std::move(rec));
  }
  return {200, "application/octet-stream", encode_records(records)};
}

HttpResponse Service::query(const Route& r) {
  const AnnotationStore ann = engine_.annotations(r.token);
  return {200, "text/plain", id_list_text(ann.query_objects(r.predicates))};
}

HttpResponse Service::write(const Route& r, const std::string& body) {
  AnnotationStore ann = engine_.annotations(r.token);
  const unsigned default_level = ann.store().context().project.annotation_level;
  std::vector<AnnotationWrite> writes;
  if (body.empty()) fail(ErrorCode::kInvalid, "empty annotation body");
  if (std::string_view(body).substr(0, 4) == kOcpaMagic) {
    for (auto& rec : decode_records(body)) {
      AnnotationWrite w;
      w.object = rec.metadata.empty() ? AnnotationObject{} : object_from_json(rec.metadata);
      w.level = rec.level;
      if (rec.kind == PayloadKind::kVoxels) w.payload = decode_voxel_list(rec.payload);
      if (rec.kind == PayloadKind::kVolume) w.payload = decode_ocpb(rec.payload);
      writes.push_back(std::move(w));
    }
  } else {
    json j;
    try {
      j = json::parse(body);
    } catch (const json::exception& e) {
      fail(ErrorCode::kInvalid, std::string("body is neither OCPA nor JSON: ") + e.what());
    }
    const bool many = j.is_array();
    for (const auto& item : many ? j : json::array({j})) {
      auto w = write_from_json(item);
      if (!item.contains("level")) w.level = default_level;
      writes.push_back(std::move(w));
    }
  }
  return {200, "text/plain", id_list_text(ann.batch_write(std::move(writes), r.write))};
}

HttpResponse Service::erase(const Route& r) {
  AnnotationStore ann = engine_.annotations(r.token);
  ann.delete_annotation(r.ids.front());
  return {200, "text/plain", ""};
}

HttpResponse Service::admin(const Route& r, bool put, const std::string& body) {
  const bool dataset = r.kind == Route::Kind::kAdminDataset;
  if (put) {
    json j;
    try {
      j = json::parse(body);
    } catch (const json::exception& e) {
      fail(ErrorCode::kInvalid, std::string("configuration is not JSON: ") + e.what());
    }
    if (!j.is_object()) fail(ErrorCode::kInvalid, "configuration must be a JSON object");
    const char* key = dataset ? "name" : "token";
    if (j.contains(key) && j[key] != r.token) fail(ErrorCode::kInvalid, "name in body does not match the URL");
    j[key] = r.token;
    if (dataset) {
      engine_.create_dataset(dataset_from_json(j.dump()));
    } else {
      const auto p = project_from_json(j.dump());
      engine_.create_project(p, placement_from_json(j.dump(), p));
    }
  }
  HttpResponse res{put ? 201 : 200, "application/json", {}};
  if (dataset) {
    res.body = dataset_to_json(engine_.dataset(r.token), true);
  } else {
    json j = json::parse(project_to_json(engine_.project(r.token)));
    j["placement"] = placement_json(*engine_.router().placement(r.token));
    res.body = j.dump();
  }
  return res;
}

HttpResponse Service::tile(const Route& r) {
  const CuboidStore store = engine_.store(r.token);
  const Image img = render_tile(store, r.tile, r.tile_channel.value_or(0));
  return {200, "image/png", png_encode(img)};
}

void Service::serve(const std::string& host, int port, unsigned threads, const std::function<void(int)>& ready) {
  httplib::Server svr;
  svr.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    const auto out = handle(HttpRequest{req.method, req.target, req.body});
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  };
  svr.Get(".*", handler);
  svr.Put(".*", handler);
  svr.Post(".*", handler);
  svr.Delete(".*", handler);
  const int bound = port == 0 ? svr.bind_to_any_port(host) : (svr.bind_to_port(host, port) ? port : -1);
  if (bound < 0) fail(ErrorCode::kConfig, "cannot listen on " + host + ":" + std::to_string(port));
  {
    std::lock_guard lock(server_mu_);
    if (stopped_) return;
    server_ = &svr;
  }
  if (ready) ready(bound);
  svr.listen_after_bind();
  std::lock_guard lock(server_mu_);
  server_ = nullptr;
}

void Service::stop() {
  std::lock_guard lock(server_mu_);
  stopped_ = true;
  if (server_) static_cast<httplib::Server*>(server_)->stop();
}

}  // namespace ocp
