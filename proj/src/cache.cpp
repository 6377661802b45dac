#include "modaudit/cache.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace modaudit {

using nlohmann::json;

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw CacheError("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out(static_cast<std::size_t>(len) * 2, '0');
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = hex[digest[i] >> 4];
    out[2 * i + 1] = hex[digest[i] & 0xF];
  }
  return out;
}

DiskCache::DiskCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path DiskCache::content_path(const CacheKey& key) const {
  return dir_ / (key.digest + ".json");
}

bool DiskCache::contains(const CacheKey& key) const {
  std::lock_guard lock(mutex_);
  return std::filesystem::exists(content_path(key));
}

std::optional<CacheEntry> DiskCache::get(const CacheKey& key) const {
  std::lock_guard lock(mutex_);
  std::ifstream in(content_path(key), std::ios::binary);
  if (!in) return std::nullopt;
  json obj;
  try {
    in >> obj;
  } catch (const json::exception& e) {
    throw CacheError("corrupt cache entry " + key.digest + ": " + e.what());
  }
  CacheEntry entry;
  entry.kind = obj.value("kind", "");
  entry.profile_name = obj.value("profile_name", "");
  if (entry.kind == "chat") {
    entry.response_text = obj.at("response").get<std::string>();
  } else if (entry.kind == "embedding") {
    entry.embedding = obj.at("embedding").get<std::vector<double>>();
  } else {
    throw CacheError("corrupt cache entry " + key.digest + ": unknown kind");
  }
  return entry;
}

void DiskCache::put(const CacheKey& key, const CacheEntry& entry,
                    const std::string& request_json) {
  std::lock_guard lock(mutex_);
  const auto path = content_path(key);
  if (std::filesystem::exists(path)) return;

  const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  json obj = {
      {"kind", entry.kind},
      {"profile_name", entry.profile_name},
      {"request", json::parse(request_json)},
      {"created_unix", now},
  };
  if (entry.kind == "chat") {
    obj["response"] = entry.response_text;
  } else {
    obj["embedding"] = entry.embedding;
  }

  const auto tmp = dir_ / (key.digest + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CacheError("cannot write cache entry: " + tmp.string());
    out << obj.dump();
  }
  std::filesystem::rename(tmp, path);

  std::ofstream index(dir_ / "index.jsonl", std::ios::binary | std::ios::app);
  index << json{{"digest", key.digest},
                {"kind", entry.kind},
                {"profile_name", entry.profile_name},
                {"created_unix", now}}
               .dump()
        << "\n";
}

}  // namespace modaudit
