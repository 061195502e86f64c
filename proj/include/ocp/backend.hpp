#pragma once

// Ordered key -> bytes storage. Keys compare bytewise (memcmp order).

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ocp/keys.hpp"

namespace ocp {

struct WriteBatch {
  struct Op {
    std::string key;
    std::optional<std::string> value;  // nullopt erases
  };
  std::vector<Op> ops;

  void put(std::string key, std::string value) { ops.push_back({std::move(key), std::move(value)}); }
  void erase(std::string key) { ops.push_back({std::move(key), std::nullopt}); }
  bool empty() const { return ops.empty(); }
};

/// Return false to stop the scan.
using ScanFn = std::function<bool(std::string_view key, std::string_view value)>;

class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::optional<std::string> get(std::string_view key) = 0;
  /// Values in request order. Implementations read keys in the order given.
  virtual std::vector<std::optional<std::string>> multi_get(std::span<const std::string> keys);
  virtual void put(std::string_view key, std::string_view value) = 0;
  virtual void erase(std::string_view key) = 0;
  /// All-or-nothing.
  virtual void apply(const WriteBatch& batch) = 0;
  /// Ascending scan of [lo, hi).
  virtual void scan(std::string_view lo, std::string_view hi, const ScanFn& fn) = 0;
  /// Drops any OS-level caching of this backend's files. No-op for memory backends.
  virtual void drop_os_cache() {}

  void scan_prefix(std::string_view prefix, const ScanFn& fn) { scan(prefix, keys::prefix_end(prefix), fn); }
};

class MemoryBackend final : public Backend {
 public:
  std::optional<std::string> get(std::string_view key) override;
  std::vector<std::optional<std::string>> multi_get(std::span<const std::string> keys) override;
  void put(std::string_view key, std::string_view value) override;
  void erase(std::string_view key) override;
  void apply(const WriteBatch& batch) override;
  void scan(std::string_view lo, std::string_view hi, const ScanFn& fn) override;

  std::size_t size() const;

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, std::string, std::less<>> data_;
};

/// SQLite-backed persistent store: one table, BLOB primary key.
class SqliteBackend final : public Backend {
 public:
  explicit SqliteBackend(std::filesystem::path file);
  ~SqliteBackend() override;

  std::optional<std::string> get(std::string_view key) override;
  std::vector<std::optional<std::string>> multi_get(std::span<const std::string> keys) override;
  void put(std::string_view key, std::string_view value) override;
  void erase(std::string_view key) override;
  void apply(const WriteBatch& batch) override;
  void scan(std::string_view lo, std::string_view hi, const ScanFn& fn) override;
  void drop_os_cache() override;

  const std::filesystem::path& file() const { return file_; }

 private:
  struct Connection;
  class Lease;
  std::unique_ptr<Connection> open_connection();
  std::unique_ptr<Connection> acquire();
  void release(std::unique_ptr<Connection> conn);

  std::filesystem::path file_;
  std::mutex pool_mu_;
  std::vector<std::unique_ptr<Connection>> pool_;
};

/// Per-kind I/O counters.
struct IoCounters {
  std::atomic<std::uint64_t> read_calls{0};   // get / multi_get / scan calls touching this kind
  std::atomic<std::uint64_t> keys_read{0};
  std::atomic<std::uint64_t> bytes_read{0};
  std::atomic<std::uint64_t> write_calls{0};  // put / erase / batch calls touching this kind
  std::atomic<std::uint64_t> keys_written{0};
};

struct IoSnapshot {
  std::uint64_t read_calls = 0, keys_read = 0, bytes_read = 0, write_calls = 0, keys_written = 0;
  IoSnapshot operator-(const IoSnapshot& o) const {
    return {read_calls - o.read_calls, keys_read - o.keys_read, bytes_read - o.bytes_read,
            write_calls - o.write_calls, keys_written - o.keys_written};
  }
};

/// Decorator that counts I/O by key kind and can log the read sequence.
class InstrumentedBackend final : public Backend {
 public:
  explicit InstrumentedBackend(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}

  std::optional<std::string> get(std::string_view key) override;
  std::vector<std::optional<std::string>> multi_get(std::span<const std::string> keys) override;
  void put(std::string_view key, std::string_view value) override;
  void erase(std::string_view key) override;
  void apply(const WriteBatch& batch) override;
  void scan(std::string_view lo, std::string_view hi, const ScanFn& fn) override;
  void drop_os_cache() override { inner_->drop_os_cache(); }

  IoSnapshot counters(keys::Kind kind) const;
  IoSnapshot total() const;
  void reset();

  /// When enabled, every key read through get/multi_get is appended in order.
  void set_read_log(bool on);
  std::vector<std::string> read_log() const;

  Backend& inner() { return *inner_; }

 private:
  static constexpr std::size_t kKinds = 7;
  IoCounters& slot(keys::Kind k) { return counters_[static_cast<std::size_t>(k)]; }
  void note_read(std::string_view key, const std::optional<std::string>& value);

  std::shared_ptr<Backend> inner_;
  std::array<IoCounters, kKinds> counters_;
  std::atomic<bool> logging_{false};
  mutable std::mutex log_mu_;
  std::vector<std::string> log_;
};

}  // namespace ocp
