#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "modaudit/cache.hpp"

namespace modaudit {

enum class ProviderKind { openai_compatible, anthropic_compatible, mock };

const char* to_string(ProviderKind kind);
ProviderKind provider_kind_from_string(const std::string& s);

/// Family default used for deterministic judging: Llama models run at 0.1,
/// everything else at 0.
double default_temperature(std::string_view model_name);

struct ModelProfile {
  std::string name;
  double temperature = 0.0;
  int max_output_tokens = 256;
  ProviderKind provider = ProviderKind::mock;
};

struct ChatRequest {
  std::string system_prompt;
  std::string user_message;  // must be non-empty
  ModelProfile profile;
};

CacheKey chat_cache_key(const ChatRequest& request);
CacheKey embedding_cache_key(const std::string& text, const ModelProfile& embedder);

struct ProviderError : std::runtime_error {
  ProviderError(const std::string& what, bool retryable_, int status_ = 0)
      : std::runtime_error(what), retryable(retryable_), status(status_) {}
  bool retryable;
  int status;
};

struct GatewayError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One backend. Implementations must be safe to call from multiple threads.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::vector<double> embed(const std::string& text, const ModelProfile& profile) = 0;
};

struct RetryPolicy {
  int max_attempts = 5;
  int base_delay_ms = 250;
  int max_delay_ms = 8000;
};

struct GatewayStats {
  std::uint64_t provider_calls = 0;  // actual backend invocations, incl. failed attempts
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
};

struct BatchItem {
  std::size_t index = 0;
  bool ok = false;
  std::string text;   // result when ok
  std::string error;  // message when !ok
};

/// Provider front door: deterministic response cache, exponential-backoff
/// retries, and bounded-concurrency batching. Shareable across threads;
/// callers see a blocking call-and-return contract.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<DiskCache> cache, RetryPolicy retry = {});

  void register_provider(const std::string& profile_name, std::shared_ptr<Provider> provider);

  /// Returns the backend text for the request, serving repeats from the
  /// cache. The response is persisted before returning.
  std::string complete(const ChatRequest& request);

  /// Deterministic fixed-dimension embedding, cached like completions.
  /// Rejects empty text and dimension changes within one embedder.
  std::vector<double> embed(const std::string& text, const ModelProfile& embedder);

  /// Runs all requests with at most max_in_flight outstanding at once.
  /// Output order equals input order; per-item failures are carried in the
  /// results, never thrown.
  std::vector<BatchItem> run_batch(const std::vector<ChatRequest>& requests,
                                   std::size_t max_in_flight);

  GatewayStats stats() const;
  DiskCache& cache() { return *cache_; }

 private:
  Provider& resolve(const ModelProfile& profile) const;
  template <typename Call>
  auto with_retries(Call&& call) -> decltype(call());

  std::shared_ptr<DiskCache> cache_;
  RetryPolicy retry_;
  std::unordered_map<std::string, std::shared_ptr<Provider>> providers_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::size_t> embed_dims_;
  GatewayStats stats_;
};

}  // namespace modaudit
