#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace modaudit {

struct CacheError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sha256_hex(std::string_view data);

/// Content-addressed key for one provider call.
struct CacheKey {
  std::string digest;  // hex SHA-256 over the canonical request encoding
};

struct CacheEntry {
  std::string kind;  // "chat" or "embedding"
  std::string profile_name;
  std::string response_text;      // chat responses
  std::vector<double> embedding;  // embedding responses
};

/// On-disk response store: one JSON file per key digest plus an append-only
/// index manifest for enumeration. Writes are serialized and atomic
/// (temp file + rename), so concurrent runs may share a cache directory.
class DiskCache {
 public:
  explicit DiskCache(std::filesystem::path dir);

  std::optional<CacheEntry> get(const CacheKey& key) const;

  /// Persists the entry with a profile snapshot and timestamp. Re-putting an
  /// existing key is a no-op.
  void put(const CacheKey& key, const CacheEntry& entry, const std::string& request_json);

  bool contains(const CacheKey& key) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path content_path(const CacheKey& key) const;

  std::filesystem::path dir_;
  mutable std::mutex mutex_;
};

}  // namespace modaudit
