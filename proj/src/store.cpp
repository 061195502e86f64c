#include "ocp/store.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "ocp/keys.hpp"

namespace ocp {

// ---- CuboidCache --------------------------------------------------------------

std::shared_ptr<const Cuboid> CuboidCache::find(const std::string& key) {
  std::lock_guard lock(mu_);
  auto it = map_.find(key);
  if (it == map_.end()) {
    misses_.fetch_add(1, std::memory_order_relaxed);
    return nullptr;
  }
  hits_.fetch_add(1, std::memory_order_relaxed);
  lru_.splice(lru_.begin(), lru_, it->second);
  return it->second->second;
}

void CuboidCache::insert(const std::string& key, std::shared_ptr<const Cuboid> cuboid, std::uint64_t read_epoch) {
  const std::size_t cost = cuboid->data.size() + key.size();
  if (cost > capacity_) return;
  std::lock_guard lock(mu_);
  if (epoch_ != read_epoch) return;  // a write may have landed since the read
  if (auto it = map_.find(key); it != map_.end()) {
    bytes_ -= it->second->second->data.size() + key.size();
    lru_.erase(it->second);
    map_.erase(it);
  }
  lru_.emplace_front(key, std::move(cuboid));
  map_[key] = lru_.begin();
  bytes_ += cost;
  while (bytes_ > capacity_ && !lru_.empty()) {
    auto& back = lru_.back();
    bytes_ -= back.second->data.size() + back.first.size();
    map_.erase(back.first);
    lru_.pop_back();
  }
}

std::uint64_t CuboidCache::epoch() const {
  std::lock_guard lock(mu_);
  return epoch_;
}

struct CuboidCache::Flight {
  std::promise<std::shared_ptr<const Cuboid>> promise;
  std::shared_future<std::shared_ptr<const Cuboid>> future = promise.get_future().share();
};

CuboidCache::Fetch CuboidCache::begin_fetch(const std::string& key) {
  std::lock_guard lock(mu_);
  // A flight that finished after the caller's miss has already cached its cuboid.
  if (auto it = map_.find(key); it != map_.end()) {
    std::promise<std::shared_ptr<const Cuboid>> done;
    done.set_value(it->second->second);
    return {nullptr, done.get_future().share()};
  }
  auto& slot = flights_[key];
  if (slot) return {nullptr, slot->future};
  slot = std::make_shared<Flight>();
  return {slot, {}};
}

void CuboidCache::finish_fetch(const std::string& key, const Fetch& fetch, std::shared_ptr<const Cuboid> cuboid,
                               std::uint64_t read_epoch) {
  insert(key, cuboid, read_epoch);  // before detaching, so no reader sees neither
  {
    std::lock_guard lock(mu_);
    if (auto it = flights_.find(key); it != flights_.end() && it->second == fetch.owned) flights_.erase(it);
  }
  fetch.owned->promise.set_value(std::move(cuboid));
}

void CuboidCache::abandon_fetch(const std::string& key, const Fetch& fetch, std::exception_ptr error) {
  {
    std::lock_guard lock(mu_);
    if (auto it = flights_.find(key); it != flights_.end() && it->second == fetch.owned) flights_.erase(it);
  }
  fetch.owned->promise.set_exception(error);
}

void CuboidCache::invalidate(const std::string& key) {
  std::lock_guard lock(mu_);
  ++epoch_;
  flights_.erase(key);
  auto it = map_.find(key);
  if (it == map_.end()) return;
  bytes_ -= it->second->second->data.size() + key.size();
  lru_.erase(it->second);
  map_.erase(it);
}

void CuboidCache::clear() {
  std::lock_guard lock(mu_);
  ++epoch_;
  flights_.clear();
  lru_.clear();
  map_.clear();
  bytes_ = 0;
}

std::size_t CuboidCache::bytes() const {
  std::lock_guard lock(mu_);
  return bytes_;
}

// ---- CuboidStore --------------------------------------------------------------

CuboidStore::CuboidStore(ProjectContext ctx) : ctx_(std::move(ctx)) {
  if (!ctx_.router || !ctx_.cuboid_locks || !ctx_.state)
    fail(ErrorCode::kConfig, "incomplete project context for " + ctx_.project.token);
}

Codec CuboidStore::codec() const {
  if (ctx_.project.type == ProjectType::kAnnotation) return Codec::kDeflate;
  return ctx_.project.compress ? Codec::kDeflate : Codec::kNone;
}

void CuboidStore::check_writable() const {
  if (ctx_.project.read_only) fail(ErrorCode::kPermission, "project " + ctx_.project.token + " is read-only");
  if (!ctx_.maintenance && ctx_.state->locked.load())
    fail(ErrorCode::kLocked, "project " + ctx_.project.token + " is locked by a batch job");
}

std::vector<std::uint32_t> CuboidStore::channels_of(const VoxelRegion& region) const {
  std::vector<std::uint32_t> channels = region.channels.empty() ? std::vector<std::uint32_t>{0} : region.channels;
  for (auto c : channels)
    if (c >= ctx_.dataset.channels) fail(ErrorCode::kNotFound, "no channel " + std::to_string(c));
  return channels;
}

std::optional<Cuboid> CuboidStore::decode(const std::optional<std::string>& data,
                                          const std::optional<std::string>& exc, const ResolutionLevel& lv) const {
  if (!data) return std::nullopt;
  Cuboid c = decompress(*data, ctx_.project.voxel_type, lv.cuboid);
  if (exc) c.exceptions = decode_exceptions(*exc);
  return c;
}

std::vector<std::optional<Cuboid>> CuboidStore::fetch(unsigned level, std::uint32_t channel,
                                                      std::span<const std::uint64_t> mortons,
                                                      bool with_exceptions) const {
  const auto lv = this->level(level);
  with_exceptions = with_exceptions && ctx_.project.exceptions;
  const auto& token = ctx_.project.token;

  std::vector<std::size_t> order(mortons.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return mortons[a] < mortons[b]; });

  struct Group {
    InstrumentedBackend* backend;
    std::vector<std::string> keys;
    std::vector<std::size_t> slots;
  };
  std::vector<Group> groups;
  for (auto i : order) {
    auto* backend = &ctx_.router->route(key(level, channel, mortons[i]));
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) { return g.backend == backend; });
    if (it == groups.end()) {
      groups.push_back({backend, {}, {}});
      it = std::prev(groups.end());
    }
    it->keys.push_back(keys::cuboid(token, level, channel, mortons[i]));
    if (with_exceptions) it->keys.push_back(keys::exceptions(token, level, channel, mortons[i]));
    it->slots.push_back(i);
  }

  std::vector<std::optional<Cuboid>> out(mortons.size());
  for (auto& g : groups) {
    const auto values = g.backend->multi_get(g.keys);
    const std::size_t stride = with_exceptions ? 2 : 1;
    for (std::size_t j = 0; j < g.slots.size(); ++j) {
      static const std::optional<std::string> none;
      out[g.slots[j]] = decode(values[j * stride], with_exceptions ? values[j * stride + 1] : none, lv);
    }
  }
  return out;
}

DenseVolume CuboidStore::read_cutout(unsigned level, const VoxelRegion& region) const {
  const auto lv = this->level(level);
  const auto channels = channels_of(region);
  const Box clipped = intersect(region.box, lv.bounds());
  if (clipped.empty()) fail(ErrorCode::kBounds, "cutout region lies outside the dataset extent");

  DenseVolume vol = DenseVolume::zeros(ctx_.project.voxel_type, clipped, channels, ctx_.dataset.has_time ? 4 : 3);
  const auto spans = cuboids_for_region(clipped, lv);
  const std::size_t width = vol.width();

  for (std::size_t ci = 0; ci < channels.size(); ++ci) {
    std::byte* dst = vol.channel_data(ci);
    std::vector<std::uint64_t> missing;
    std::vector<const CuboidSpan*> missing_spans;
    std::vector<CuboidCache::Fetch> owned;
    std::vector<std::pair<const CuboidSpan*, CuboidCache::Fetch>> joined;
    auto place = [&](const CuboidSpan& span, const Cuboid& c) {
      if (!c.data.empty()) copy_region(c.data.data(), span.cuboid_box, dst, clipped, span.intersection, width);
    };
    for (const auto& span : spans) {
      if (ctx_.cache) {
        const auto k = keys::cuboid(ctx_.project.token, level, channels[ci], span.key.value);
        if (auto hit = ctx_.cache->find(k)) {
          place(span, *hit);
          continue;
        }
        auto f = ctx_.cache->begin_fetch(k);
        if (!f.owned) {
          joined.emplace_back(&span, std::move(f));
          continue;
        }
        owned.push_back(std::move(f));
      }
      missing.push_back(span.key.value);
      missing_spans.push_back(&span);
    }
    const std::uint64_t epoch = ctx_.cache ? ctx_.cache->epoch() : 0;
    std::vector<std::optional<Cuboid>> fetched;
    try {
      fetched = fetch(level, channels[ci], missing, false);
    } catch (...) {
      for (std::size_t i = 0; i < owned.size(); ++i)
        ctx_.cache->abandon_fetch(keys::cuboid(ctx_.project.token, level, channels[ci], missing[i]), owned[i],
                                  std::current_exception());
      throw;
    }
    for (std::size_t i = 0; i < fetched.size(); ++i) {
      const auto& span = *missing_spans[i];
      if (!ctx_.cache) {
        if (fetched[i]) place(span, *fetched[i]);
        continue;
      }
      // Absent cuboids are cached as empty buffers so warm reads skip the backend.
      auto entry = fetched[i] ? std::make_shared<const Cuboid>(std::move(*fetched[i]))
                              : std::make_shared<const Cuboid>(Cuboid{ctx_.project.voxel_type, lv.cuboid, {}, {}});
      place(span, *entry);
      ctx_.cache->finish_fetch(keys::cuboid(ctx_.project.token, level, channels[ci], span.key.value), owned[i],
                               std::move(entry), epoch);
    }
    for (const auto& [span, f] : joined) place(*span, *f.pending.get());
  }
  return vol;
}

void CuboidStore::write_cutout(unsigned level, const VoxelRegion& region, const DenseVolume& volume) {
  check_writable();
  if (ctx_.project.type == ProjectType::kAnnotation && !ctx_.maintenance)
    fail(ErrorCode::kInvalid, "annotation projects are written through annotation writes");
  const auto lv = this->level(level);
  const auto channels = channels_of(region);
  if (volume.type != ctx_.project.voxel_type) fail(ErrorCode::kInvalid, "voxel type does not match project");
  if (region.box.empty() || !lv.bounds().contains(region.box))
    fail(ErrorCode::kBounds, "write region must lie inside the level extent");
  for (std::size_t d = 0; d < kAxes; ++d)
    if (volume.dims[d] != region.box.extent(d)) fail(ErrorCode::kInvalid, "volume dims do not match region");
  if (volume.channels.size() != channels.size() || volume.data.size() != volume.channel_bytes() * channels.size())
    fail(ErrorCode::kInvalid, "volume payload does not match channel count");

  const Box src_box = region.box;
  const std::size_t width = volume.width();
  for (std::size_t ci = 0; ci < channels.size(); ++ci) {
    const std::byte* src = volume.channel_data(ci);
    for (const auto& span : cuboids_for_region(region.box, lv)) {
      const CuboidKey ck = key(level, channels[ci], span.key.value);
      auto& backend = ctx_.router->route(ck);
      const std::string data_key = keys::cuboid(ck.project, level, ck.channel, ck.morton.value);
      std::lock_guard lock(ctx_.cuboid_locks->for_key(data_key));
      Cuboid c;
      if (span.intersection == span.cuboid_box && !ctx_.project.exceptions) {
        c = Cuboid::zero(ctx_.project.voxel_type, lv.cuboid);
      } else {
        auto existing = fetch(level, ck.channel, std::span(&ck.morton.value, 1), true);
        c = existing[0] ? std::move(*existing[0]) : Cuboid::zero(ctx_.project.voxel_type, lv.cuboid);
      }
      copy_region(src, src_box, c.data.data(), span.cuboid_box, span.intersection, width);
      WriteBatch batch;
      store_encoded(ck, c, batch);
      backend.apply(batch);
      if (ctx_.cache) ctx_.cache->invalidate(data_key);
    }
  }
}

Cuboid CuboidStore::get_cuboid(const CuboidKey& key, bool with_exceptions) const {
  auto got = fetch(key.level, key.channel, std::span(&key.morton.value, 1), with_exceptions);
  if (got[0]) return std::move(*got[0]);
  return Cuboid::zero(ctx_.project.voxel_type, level(key.level).cuboid);
}

void CuboidStore::store_encoded(const CuboidKey& key, const Cuboid& cuboid, WriteBatch& batch) const {
  const auto data_key = keys::cuboid(key.project, key.level, key.channel, key.morton.value);
  const auto exc_key = keys::exceptions(key.project, key.level, key.channel, key.morton.value);
  if (cuboid.all_zero()) {
    batch.erase(data_key);
    if (ctx_.project.exceptions) batch.erase(exc_key);
    return;
  }
  batch.put(data_key, compress(cuboid, codec()));
  if (!ctx_.project.exceptions) return;
  if (cuboid.exceptions.empty())
    batch.erase(exc_key);
  else
    batch.put(exc_key, encode_exceptions(cuboid.exceptions, codec()));
}

void CuboidStore::put_cuboid(const CuboidKey& key, const Cuboid& cuboid) {
  check_writable();
  const auto lv = level(key.level);
  if (cuboid.type != ctx_.project.voxel_type || cuboid.shape != lv.cuboid ||
      cuboid.data.size() != cuboid.voxel_count() * voxel_width(cuboid.type))
    fail(ErrorCode::kInvalid, "cuboid does not match project geometry");
  if (!cuboid.exceptions.empty() && !ctx_.project.exceptions)
    fail(ErrorCode::kConfig, "project " + ctx_.project.token + " does not support exceptions");
  auto& backend = ctx_.router->route(key);
  const auto data_key = keys::cuboid(key.project, key.level, key.channel, key.morton.value);
  std::lock_guard lock(ctx_.cuboid_locks->for_key(data_key));
  WriteBatch batch;
  store_encoded(key, cuboid, batch);
  backend.apply(batch);
  if (ctx_.cache) ctx_.cache->invalidate(data_key);
}

void CuboidStore::scan_level(unsigned level, std::uint32_t channel,
                             const std::function<void(std::uint64_t, Cuboid&&)>& fn) const {
  const auto lv = this->level(level);
  const auto prefix = keys::cuboid_level_prefix(ctx_.project.token, level, channel);
  struct Raw {
    std::optional<std::string> data, exc;
  };
  std::map<std::uint64_t, Raw> rows;
  for (const auto& id : ctx_.router->backends_of(ctx_.project.token)) {
    ctx_.router->backend(id).scan_prefix(prefix, [&](std::string_view k, std::string_view v) {
      const auto parts = keys::parse_cuboid(k);
      if (!parts) return true;
      // Orphans left on a non-routed backend (e.g. an aborted migration) are ignored.
      if (&ctx_.router->route(key(level, channel, parts->morton)) != &ctx_.router->backend(id)) return true;
      auto& row = rows[parts->morton];
      (parts->exception ? row.exc : row.data) = std::string(v);
      return true;
    });
  }
  for (auto& [morton, raw] : rows) {
    auto c = decode(raw.data, ctx_.project.exceptions ? raw.exc : std::nullopt, lv);
    if (c) fn(morton, std::move(*c));
  }
}

std::vector<std::uint64_t> CuboidStore::stored_keys(unsigned level, std::uint32_t channel) const {
  const auto prefix = keys::cuboid_level_prefix(ctx_.project.token, level, channel);
  std::vector<std::uint64_t> out;
  for (const auto& id : ctx_.router->backends_of(ctx_.project.token)) {
    ctx_.router->backend(id).scan_prefix(prefix, [&](std::string_view k, std::string_view) {
      const auto parts = keys::parse_cuboid(k);
      if (parts && !parts->exception &&
          &ctx_.router->route(key(level, channel, parts->morton)) == &ctx_.router->backend(id))
        out.push_back(parts->morton);
      return true;
    });
  }
  std::sort(out.begin(), out.end());
  return out;
}

void CuboidStore::clear_level(unsigned level) {
  check_writable();
  const auto prefix = keys::cuboid_level_prefix(ctx_.project.token, level);
  for (const auto& id : ctx_.router->backends_of(ctx_.project.token)) {
    auto& backend = ctx_.router->backend(id);
    WriteBatch batch;
    backend.scan_prefix(prefix, [&](std::string_view k, std::string_view) {
      batch.erase(std::string(k));
      return true;
    });
    backend.apply(batch);
  }
  if (ctx_.cache) ctx_.cache->clear();
}

}  // namespace ocp
