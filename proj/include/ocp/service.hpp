#pragma once

// REST protocol. Canonical URL forms (all end in '/'):
//
//   GET    /<token>/cutout/<res>/<x1>,<x2>/<y1>,<y2>/<z1>,<z2>[/<t1>,<t2>]/[?channels=a,b]
//          ("hdf5" is accepted in place of "cutout")
//   GET    /<token>/<id>[,<id>...]/[voxels[/<res>]|boundingbox[/<res>]|cutout[/<res>[/<ranges>]]]/
//   GET    /<token>/objects/<field>/[<op>/]<value>/...     kv predicates: kv/<key>/<value>
//   PUT    /<token>/[?discipline=overwrite|preserve|exception][&update][&dataonly]
//          (the options may also be given as path segments)
//   DELETE /<token>/<id>/
//   GET|PUT /admin/datasets/<name>/   GET|PUT /admin/projects/<token>/
//   GET    /tiles/<token>/<res>/<slice>/<row>_<col>.png[?plane=xy|xz|yz][&channel=c]
//
// Ranges are half-open. Bodies: OCPB volumes, voxel lists and OCPA records
// (see wire.hpp), canonical JSON for metadata, boxes and configuration,
// comma-separated decimal text for id lists.

#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ocp/annotations.hpp"
#include "ocp/engine.hpp"
#include "ocp/tiles.hpp"

namespace ocp {

struct HttpRequest {
  std::string method;  // GET, PUT, POST, DELETE
  std::string target;  // path plus optional query
  std::string body;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "text/plain";
  std::string body;
};

int http_status(ErrorCode code);

/// A parsed request URL.
struct Route {
  enum class Kind { kCutout, kObject, kQuery, kWrite, kDelete, kAdminDataset, kAdminProject, kTile };
  enum class Option { kMetadata, kVoxels, kBoundingBox, kCutout };

  Kind kind = Kind::kCutout;
  std::string token;  // dataset name for kAdminDataset
  bool create = false;  // admin PUT/POST

  // cutouts, including object cutouts with a region
  bool hdf5_alias = false;
  std::optional<unsigned> level;
  std::optional<Box> box;
  bool has_time_range = false;
  std::vector<std::uint32_t> channels;

  std::vector<std::uint32_t> ids;
  Option option = Option::kMetadata;

  std::vector<Predicate> predicates;

  WriteOptions write;
  bool discipline_given = false;

  TileAddress tile;
  bool plane_given = false;
  std::optional<std::uint32_t> tile_channel;

  bool operator==(const Route&) const;
};

/// Throws kInvalid for a malformed URL and kNotFound for an unknown shape.
Route parse_route(const std::string& method, const std::string& target);
/// Canonical URL (path and query) of a route.
std::string render_route(const Route& route);

/// Request dispatch over an engine; holds no per-client state.
class Service {
 public:
  explicit Service(Engine& engine) : engine_(engine) {}

  HttpResponse handle(const HttpRequest& req);
  /// Blocks serving HTTP/1.1 until stop() is called. Port 0 picks a free
  /// port; `ready` receives the bound port once listening.
  void serve(const std::string& host, int port, unsigned threads = 16,
             const std::function<void(int)>& ready = {});
  /// Ends the current or next serve() call.
  void stop();

 private:
  HttpResponse dispatch(const Route& r, const std::string& body);
  HttpResponse cutout(const Route& r);
  HttpResponse object(const Route& r);
  HttpResponse query(const Route& r);
  HttpResponse write(const Route& r, const std::string& body);
  HttpResponse erase(const Route& r);
  HttpResponse admin(const Route& r, bool put, const std::string& body);
  HttpResponse tile(const Route& r);

  Engine& engine_;
  std::mutex server_mu_;
  void* server_ = nullptr;  // httplib::Server while serving
  bool stopped_ = false;    // a stop() before listening still ends serve()
};

}  // namespace ocp
