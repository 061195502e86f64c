#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ocp/store.hpp"

namespace ocp {

enum class ObjectType : std::uint8_t { kSeed, kSynapse, kSegment, kNeuron, kOrganelle, kGeneric };

std::string_view object_type_name(ObjectType t);
std::optional<ObjectType> parse_object_type(std::string_view name);

/// Object metadata. Id 0 means "unlabeled" and, on writes, "assign one".
struct AnnotationObject {
  std::uint32_t id = 0;
  ObjectType type = ObjectType::kGeneric;
  double confidence = 1.0;
  std::int32_t status = 0;
  std::string author;
  std::map<std::string, std::string> kv;

  bool operator==(const AnnotationObject&) const = default;
};

/// Canonical JSON: sorted keys, no whitespace.
std::string to_json(const AnnotationObject& obj);
AnnotationObject object_from_json(std::string_view text);

enum class Discipline : std::uint8_t { kOverwrite, kPreserve, kException };

std::optional<Discipline> parse_discipline(std::string_view name);
std::string_view discipline_name(Discipline d);

struct WriteOptions {
  Discipline discipline = Discipline::kOverwrite;
  bool update = false;    // the object must already exist
  bool dataonly = false;  // leave metadata untouched
};

using VoxelList = std::vector<Extent>;
/// Voxels to label: none, an explicit list, or the nonzero voxels of a volume.
using Payload = std::variant<std::monostate, VoxelList, DenseVolume>;

struct AnnotationWrite {
  AnnotationObject object;
  Payload payload;
  unsigned level = 0;
};

enum class CompareOp : std::uint8_t { kEq, kLt, kLeq, kGt, kGeq };
std::optional<CompareOp> parse_compare_op(std::string_view name);
std::string_view compare_op_name(CompareOp op);

/// One conjunct of a metadata query. `key` is only used by the "kv" field.
struct Predicate {
  std::string field;  // type, status, author, confidence, kv
  std::string key;
  CompareOp op = CompareOp::kEq;
  std::string value;
};

/// Labeled-volume operations on one annotation project.
class AnnotationStore {
 public:
  explicit AnnotationStore(ProjectContext ctx);

  CuboidStore& store() { return store_; }
  const CuboidStore& store() const { return store_; }

  std::uint32_t write_annotation(AnnotationWrite write, const WriteOptions& options);
  /// Equivalent to sequential writes; validated up front and the sparse-index
  /// and metadata updates of the whole batch are committed in one batch.
  std::vector<std::uint32_t> batch_write(std::vector<AnnotationWrite> writes, const WriteOptions& options);

  /// Throws kNotFound for an unknown id.
  AnnotationObject object(std::uint32_t id) const;
  bool exists(std::uint32_t id) const;
  /// Records in request order; any unknown id fails the whole call.
  std::vector<AnnotationObject> batch_read(std::span<const std::uint32_t> ids) const;

  /// Voxels carrying `id` as primary label or exception, sorted by (t, z, y, x).
  VoxelList object_voxels(std::uint32_t id, unsigned level) const;
  /// Cuboid-granularity box from the sparse index alone.
  Box object_bounding_box(std::uint32_t id, unsigned level) const;
  DenseVolume object_cutout(std::uint32_t id, unsigned level, std::optional<Box> region = std::nullopt) const;
  std::set<std::uint32_t> ids_in_region(unsigned level, const Box& region) const;
  DenseVolume filter_cutout(unsigned level, const Box& region, const std::set<std::uint32_t>& keep) const;
  std::vector<std::uint32_t> query_objects(const std::vector<Predicate>& predicates) const;
  void delete_annotation(std::uint32_t id);

  /// Sorted Morton keys of the cuboids holding `id` at `level`.
  std::vector<std::uint64_t> index_entry(std::uint32_t id, unsigned level) const;
  /// Every (id -> keys) entry at `level`.
  std::map<std::uint32_t, std::vector<std::uint64_t>> index_entries(unsigned level) const;
  /// Recomputes the sparse index of a level from stored cuboids.
  void rebuild_index(unsigned level);
  std::vector<std::uint32_t> all_ids() const;

 private:
  struct Delta;
  void validate(const AnnotationWrite& w, const WriteOptions& options) const;
  void apply_voxels(std::uint32_t id, const AnnotationWrite& w, Discipline discipline, Delta& delta);
  void commit(const Delta& delta, const std::vector<AnnotationObject>& metadata, std::uint32_t counter);
  std::uint32_t read_counter() const;
  std::set<std::uint32_t> ids_matching(const Predicate& p) const;
  void field_entries(const AnnotationObject& obj, std::vector<std::string>& out) const;

  CuboidStore store_;
};

}  // namespace ocp
