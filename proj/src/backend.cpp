#include "ocp/backend.hpp"

#include <fcntl.h>
#include <sqlite3.h>
#include <unistd.h>

#include "ocp/types.hpp"

namespace ocp {

std::vector<std::optional<std::string>> Backend::multi_get(std::span<const std::string> keys) {
  std::vector<std::optional<std::string>> out;
  out.reserve(keys.size());
  for (const auto& k : keys) out.push_back(get(k));
  return out;
}

// ---- MemoryBackend ----------------------------------------------------------

std::optional<std::string> MemoryBackend::get(std::string_view key) {
  std::shared_lock lock(mu_);
  auto it = data_.find(key);
  if (it == data_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::optional<std::string>> MemoryBackend::multi_get(std::span<const std::string> keys) {
  std::shared_lock lock(mu_);
  std::vector<std::optional<std::string>> out;
  out.reserve(keys.size());
  for (const auto& k : keys) {
    auto it = data_.find(k);
    out.push_back(it == data_.end() ? std::nullopt : std::optional<std::string>(it->second));
  }
  return out;
}

void MemoryBackend::put(std::string_view key, std::string_view value) {
  std::unique_lock lock(mu_);
  data_.insert_or_assign(std::string(key), std::string(value));
}

void MemoryBackend::erase(std::string_view key) {
  std::unique_lock lock(mu_);
  auto it = data_.find(key);
  if (it != data_.end()) data_.erase(it);
}

void MemoryBackend::apply(const WriteBatch& batch) {
  std::unique_lock lock(mu_);
  for (const auto& op : batch.ops) {
    if (op.value) {
      data_.insert_or_assign(op.key, *op.value);
    } else if (auto it = data_.find(op.key); it != data_.end()) {
      data_.erase(it);
    }
  }
}

void MemoryBackend::scan(std::string_view lo, std::string_view hi, const ScanFn& fn) {
  // Copy out under the lock so callbacks may write to this backend.
  std::vector<std::pair<std::string, std::string>> rows;
  {
    std::shared_lock lock(mu_);
    for (auto it = data_.lower_bound(lo); it != data_.end() && std::string_view(it->first) < hi; ++it)
      rows.emplace_back(it->first, it->second);
  }
  for (const auto& [k, v] : rows)
    if (!fn(k, v)) break;
}

std::size_t MemoryBackend::size() const {
  std::shared_lock lock(mu_);
  return data_.size();
}

// ---- SqliteBackend ----------------------------------------------------------

namespace {

void check(int rc, sqlite3* db, const char* what) {
  if (rc != SQLITE_OK && rc != SQLITE_DONE && rc != SQLITE_ROW)
    fail(ErrorCode::kStorage, std::string(what) + ": " + (db ? sqlite3_errmsg(db) : sqlite3_errstr(rc)));
}

}  // namespace

struct SqliteBackend::Connection {
  sqlite3* db = nullptr;
  sqlite3_stmt* get = nullptr;
  sqlite3_stmt* put = nullptr;
  sqlite3_stmt* del = nullptr;
  sqlite3_stmt* scan = nullptr;

  ~Connection() {
    for (auto* s : {get, put, del, scan}) sqlite3_finalize(s);
    sqlite3_close(db);
  }

  void exec(const char* sql) { check(sqlite3_exec(db, sql, nullptr, nullptr, nullptr), db, sql); }

  sqlite3_stmt* prepare(const char* sql) {
    sqlite3_stmt* s = nullptr;
    check(sqlite3_prepare_v3(db, sql, -1, SQLITE_PREPARE_PERSISTENT, &s, nullptr), db, sql);
    return s;
  }

  std::optional<std::string> fetch(std::string_view key) {
    sqlite3_reset(get);
    sqlite3_bind_blob(get, 1, key.data(), static_cast<int>(key.size()), SQLITE_STATIC);
    const int rc = sqlite3_step(get);
    if (rc == SQLITE_DONE) return std::nullopt;
    check(rc, db, "get");
    const auto* p = static_cast<const char*>(sqlite3_column_blob(get, 0));
    std::string v(p ? p : "", static_cast<std::size_t>(sqlite3_column_bytes(get, 0)));
    sqlite3_reset(get);
    return v;
  }

  void store(std::string_view key, std::string_view value) {
    sqlite3_reset(put);
    sqlite3_bind_blob(put, 1, key.data(), static_cast<int>(key.size()), SQLITE_STATIC);
    sqlite3_bind_blob(put, 2, value.data(), static_cast<int>(value.size()), SQLITE_STATIC);
    check(sqlite3_step(put), db, "put");
    sqlite3_reset(put);
  }

  void remove(std::string_view key) {
    sqlite3_reset(del);
    sqlite3_bind_blob(del, 1, key.data(), static_cast<int>(key.size()), SQLITE_STATIC);
    check(sqlite3_step(del), db, "erase");
    sqlite3_reset(del);
  }
};

// Returns the connection to the pool on scope exit.
class SqliteBackend::Lease {
 public:
  explicit Lease(SqliteBackend& owner) : owner_(owner), conn_(owner.acquire()) {}
  ~Lease() { owner_.release(std::move(conn_)); }
  Connection* operator->() { return conn_.get(); }

 private:
  SqliteBackend& owner_;
  std::unique_ptr<Connection> conn_;
};

SqliteBackend::SqliteBackend(std::filesystem::path file) : file_(std::move(file)) {
  if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
  release(open_connection());
}

SqliteBackend::~SqliteBackend() = default;

std::unique_ptr<SqliteBackend::Connection> SqliteBackend::open_connection() {
  auto c = std::make_unique<Connection>();
  const int rc = sqlite3_open_v2(file_.c_str(), &c->db,
                                 SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_NOMUTEX, nullptr);
  check(rc, c->db, "open");
  sqlite3_busy_timeout(c->db, 30000);
  c->exec("PRAGMA journal_mode=WAL");
  c->exec("PRAGMA synchronous=NORMAL");
  c->exec("CREATE TABLE IF NOT EXISTS kv (k BLOB PRIMARY KEY, v BLOB NOT NULL) WITHOUT ROWID");
  c->get = c->prepare("SELECT v FROM kv WHERE k = ?1");
  c->put = c->prepare("INSERT OR REPLACE INTO kv (k, v) VALUES (?1, ?2)");
  c->del = c->prepare("DELETE FROM kv WHERE k = ?1");
  c->scan = c->prepare("SELECT k, v FROM kv WHERE k >= ?1 AND k < ?2 ORDER BY k");
  return c;
}

std::unique_ptr<SqliteBackend::Connection> SqliteBackend::acquire() {
  {
    std::lock_guard lock(pool_mu_);
    if (!pool_.empty()) {
      auto c = std::move(pool_.back());
      pool_.pop_back();
      return c;
    }
  }
  return open_connection();
}

void SqliteBackend::release(std::unique_ptr<Connection> conn) {
  std::lock_guard lock(pool_mu_);
  pool_.push_back(std::move(conn));
}

std::optional<std::string> SqliteBackend::get(std::string_view key) {
  Lease c(*this);
  return c->fetch(key);
}

std::vector<std::optional<std::string>> SqliteBackend::multi_get(std::span<const std::string> keys) {
  Lease c(*this);
  std::vector<std::optional<std::string>> out;
  out.reserve(keys.size());
  c->exec("BEGIN");
  try {
    for (const auto& k : keys) out.push_back(c->fetch(k));
  } catch (...) {
    sqlite3_exec(c->db == nullptr ? nullptr : c->db, "ROLLBACK", nullptr, nullptr, nullptr);
    throw;
  }
  c->exec("COMMIT");
  return out;
}

void SqliteBackend::put(std::string_view key, std::string_view value) {
  Lease c(*this);
  c->store(key, value);
}

void SqliteBackend::erase(std::string_view key) {
  Lease c(*this);
  c->remove(key);
}

void SqliteBackend::apply(const WriteBatch& batch) {
  if (batch.empty()) return;
  Lease c(*this);
  c->exec("BEGIN IMMEDIATE");
  try {
    for (const auto& op : batch.ops) {
      if (op.value)
        c->store(op.key, *op.value);
      else
        c->remove(op.key);
    }
    c->exec("COMMIT");
  } catch (...) {
    sqlite3_exec(c->db, "ROLLBACK", nullptr, nullptr, nullptr);
    throw;
  }
}

void SqliteBackend::scan(std::string_view lo, std::string_view hi, const ScanFn& fn) {
  // Materialize first: callbacks may write to this backend.
  std::vector<std::pair<std::string, std::string>> rows;
  {
    Lease c(*this);
    auto* s = c->scan;
    sqlite3_reset(s);
    sqlite3_bind_blob(s, 1, lo.data(), static_cast<int>(lo.size()), SQLITE_STATIC);
    sqlite3_bind_blob(s, 2, hi.data(), static_cast<int>(hi.size()), SQLITE_STATIC);
    int rc;
    while ((rc = sqlite3_step(s)) == SQLITE_ROW) {
      const auto* k = static_cast<const char*>(sqlite3_column_blob(s, 0));
      std::string key(k ? k : "", static_cast<std::size_t>(sqlite3_column_bytes(s, 0)));
      const auto* v = static_cast<const char*>(sqlite3_column_blob(s, 1));
      std::string value(v ? v : "", static_cast<std::size_t>(sqlite3_column_bytes(s, 1)));
      rows.emplace_back(std::move(key), std::move(value));
    }
    sqlite3_reset(s);
    check(rc, c->db, "scan");
  }
  for (const auto& [k, v] : rows)
    if (!fn(k, v)) break;
}

void SqliteBackend::drop_os_cache() {
  {
    Lease c(*this);
    c->exec("PRAGMA wal_checkpoint(TRUNCATE)");
  }
  {
    // Pooled connections keep their own page caches.
    std::lock_guard lock(pool_mu_);
    pool_.clear();
  }
  for (const auto& path : {file_, std::filesystem::path(file_.string() + "-wal")}) {
    const int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0) continue;
    ::fdatasync(fd);
    ::posix_fadvise(fd, 0, 0, POSIX_FADV_DONTNEED);
    ::close(fd);
  }
}

// ---- InstrumentedBackend ----------------------------------------------------

void InstrumentedBackend::note_read(std::string_view key, const std::optional<std::string>& value) {
  auto& c = slot(keys::kind_of(key));
  c.keys_read.fetch_add(1, std::memory_order_relaxed);
  if (value) c.bytes_read.fetch_add(value->size(), std::memory_order_relaxed);
  if (logging_.load(std::memory_order_relaxed)) {
    std::lock_guard lock(log_mu_);
    log_.emplace_back(key);
  }
}

std::optional<std::string> InstrumentedBackend::get(std::string_view key) {
  auto v = inner_->get(key);
  slot(keys::kind_of(key)).read_calls.fetch_add(1, std::memory_order_relaxed);
  note_read(key, v);
  return v;
}

std::vector<std::optional<std::string>> InstrumentedBackend::multi_get(std::span<const std::string> keys) {
  auto values = inner_->multi_get(keys);
  std::array<bool, kKinds> touched{};
  for (std::size_t i = 0; i < keys.size(); ++i) {
    touched[static_cast<std::size_t>(keys::kind_of(keys[i]))] = true;
    note_read(keys[i], values[i]);
  }
  for (std::size_t k = 0; k < kKinds; ++k)
    if (touched[k]) counters_[k].read_calls.fetch_add(1, std::memory_order_relaxed);
  return values;
}

void InstrumentedBackend::put(std::string_view key, std::string_view value) {
  inner_->put(key, value);
  auto& c = slot(keys::kind_of(key));
  c.write_calls.fetch_add(1, std::memory_order_relaxed);
  c.keys_written.fetch_add(1, std::memory_order_relaxed);
}

void InstrumentedBackend::erase(std::string_view key) {
  inner_->erase(key);
  auto& c = slot(keys::kind_of(key));
  c.write_calls.fetch_add(1, std::memory_order_relaxed);
  c.keys_written.fetch_add(1, std::memory_order_relaxed);
}

void InstrumentedBackend::apply(const WriteBatch& batch) {
  inner_->apply(batch);
  std::array<bool, kKinds> touched{};
  for (const auto& op : batch.ops) {
    const auto k = static_cast<std::size_t>(keys::kind_of(op.key));
    touched[k] = true;
    counters_[k].keys_written.fetch_add(1, std::memory_order_relaxed);
  }
  for (std::size_t k = 0; k < kKinds; ++k)
    if (touched[k]) counters_[k].write_calls.fetch_add(1, std::memory_order_relaxed);
}

void InstrumentedBackend::scan(std::string_view lo, std::string_view hi, const ScanFn& fn) {
  std::array<bool, kKinds> touched{};
  inner_->scan(lo, hi, [&](std::string_view k, std::string_view v) {
    const auto kind = static_cast<std::size_t>(keys::kind_of(k));
    touched[kind] = true;
    counters_[kind].keys_read.fetch_add(1, std::memory_order_relaxed);
    counters_[kind].bytes_read.fetch_add(v.size(), std::memory_order_relaxed);
    return fn(k, v);
  });
  for (std::size_t k = 0; k < kKinds; ++k)
    if (touched[k]) counters_[k].read_calls.fetch_add(1, std::memory_order_relaxed);
}

IoSnapshot InstrumentedBackend::counters(keys::Kind kind) const {
  const auto& c = counters_[static_cast<std::size_t>(kind)];
  return {c.read_calls.load(), c.keys_read.load(), c.bytes_read.load(), c.write_calls.load(), c.keys_written.load()};
}

IoSnapshot InstrumentedBackend::total() const {
  IoSnapshot t;
  for (std::size_t k = 0; k < kKinds; ++k) {
    const auto s = counters(static_cast<keys::Kind>(k));
    t.read_calls += s.read_calls;
    t.keys_read += s.keys_read;
    t.bytes_read += s.bytes_read;
    t.write_calls += s.write_calls;
    t.keys_written += s.keys_written;
  }
  return t;
}

void InstrumentedBackend::reset() {
  for (auto& c : counters_) {
    c.read_calls = 0;
    c.keys_read = 0;
    c.bytes_read = 0;
    c.write_calls = 0;
    c.keys_written = 0;
  }
  std::lock_guard lock(log_mu_);
  log_.clear();
}

void InstrumentedBackend::set_read_log(bool on) { logging_.store(on); }

std::vector<std::string> InstrumentedBackend::read_log() const {
  std::lock_guard lock(log_mu_);
  return log_;
}

}  // namespace ocp
