#include "modaudit/gateway.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <random>
#include <thread>

#include "json.hpp"

namespace modaudit {

using nlohmann::json;

const char* to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::openai_compatible: return "openai-compatible";
    case ProviderKind::anthropic_compatible: return "anthropic-compatible";
    case ProviderKind::mock: return "mock";
  }
  return "unknown";
}

ProviderKind provider_kind_from_string(const std::string& s) {
  if (s == "openai-compatible") return ProviderKind::openai_compatible;
  if (s == "anthropic-compatible") return ProviderKind::anthropic_compatible;
  if (s == "mock") return ProviderKind::mock;
  throw GatewayError("unknown provider kind: " + s);
}

double default_temperature(std::string_view model_name) {
  std::string lower(model_name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower.find("llama") != std::string::npos ? 0.1 : 0.0;
}

namespace {

std::string format_temperature(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.8g", t);
  return buf;
}

// \x1f-separated canonical encoding; the leading tag keeps chat and
// embedding keys in disjoint spaces.
std::string canonical(std::initializer_list<std::string_view> fields) {
  std::string out;
  for (auto f : fields) {
    out.append(f);
    out.push_back('\x1f');
  }
  return out;
}

}  // namespace

CacheKey chat_cache_key(const ChatRequest& request) {
  return CacheKey{sha256_hex(canonical({"chat", to_string(request.profile.provider),
                                        request.profile.name,
                                        format_temperature(request.profile.temperature),
                                        request.system_prompt, request.user_message}))};
}

CacheKey embedding_cache_key(const std::string& text, const ModelProfile& embedder) {
  return CacheKey{sha256_hex(
      canonical({"embedding", to_string(embedder.provider), embedder.name, text}))};
}

Gateway::Gateway(std::shared_ptr<DiskCache> cache, RetryPolicy retry)
    : cache_(std::move(cache)), retry_(retry) {
  if (!cache_) throw GatewayError("Gateway requires a cache");
}

void Gateway::register_provider(const std::string& profile_name,
                                std::shared_ptr<Provider> provider) {
  std::lock_guard lock(mutex_);
  providers_[profile_name] = std::move(provider);
}

Provider& Gateway::resolve(const ModelProfile& profile) const {
  std::lock_guard lock(mutex_);
  auto it = providers_.find(profile.name);
  if (it == providers_.end())
    throw GatewayError("no provider registered for profile '" + profile.name + "'");
  return *it->second;
}

template <typename Call>
auto Gateway::with_retries(Call&& call) -> decltype(call()) {
  thread_local std::mt19937_64 jitter_rng(
      std::hash<std::thread::id>{}(std::this_thread::get_id()) ^
      static_cast<std::uint64_t>(
          std::chrono::steady_clock::now().time_since_epoch().count()));
  int attempt = 0;
  for (;;) {
    ++attempt;
    try {
      auto result = call();
      return result;
    } catch (const ProviderError& e) {
      if (!e.retryable || attempt >= retry_.max_attempts) throw;
      std::int64_t delay = retry_.base_delay_ms;
      for (int i = 1; i < attempt && delay < retry_.max_delay_ms; ++i) delay *= 2;
      delay = std::min<std::int64_t>(delay, retry_.max_delay_ms);
      if (delay > 0) {
        delay += static_cast<std::int64_t>(jitter_rng() % (delay / 2 + 1));
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      }
    }
  }
}

std::string Gateway::complete(const ChatRequest& request) {
  if (request.user_message.empty()) throw std::invalid_argument("ChatRequest.user_message is empty");
  const CacheKey key = chat_cache_key(request);
  if (auto cached = cache_->get(key)) {
    std::lock_guard lock(mutex_);
    ++stats_.cache_hits;
    return cached->response_text;
  }
  {
    std::lock_guard lock(mutex_);
    ++stats_.cache_misses;
  }
  Provider& provider = resolve(request.profile);
  std::string text = with_retries([&] {
    {
      std::lock_guard lock(mutex_);
      ++stats_.provider_calls;
    }
    return provider.complete(request);
  });
  const json request_snapshot = {
      {"profile",
       {{"name", request.profile.name},
        {"provider", to_string(request.profile.provider)},
        {"temperature", request.profile.temperature},
        {"max_output_tokens", request.profile.max_output_tokens}}},
      {"system_prompt", request.system_prompt},
      {"user_message", request.user_message},
  };
  cache_->put(key, CacheEntry{"chat", request.profile.name, text, {}}, request_snapshot.dump());
  return text;
}

std::vector<double> Gateway::embed(const std::string& text, const ModelProfile& embedder) {
  if (text.empty()) throw std::invalid_argument("embed() requires non-empty text");
  const CacheKey key = embedding_cache_key(text, embedder);
  std::vector<double> values;
  if (auto cached = cache_->get(key)) {
    std::lock_guard lock(mutex_);
    ++stats_.cache_hits;
    values = std::move(cached->embedding);
  } else {
    {
      std::lock_guard lock(mutex_);
      ++stats_.cache_misses;
    }
    Provider& provider = resolve(embedder);
    values = with_retries([&] {
      {
        std::lock_guard lock(mutex_);
        ++stats_.provider_calls;
      }
      return provider.embed(text, embedder);
    });
    const json request_snapshot = {
        {"profile", {{"name", embedder.name}, {"provider", to_string(embedder.provider)}}},
        {"input", text},
    };
    cache_->put(key, CacheEntry{"embedding", embedder.name, "", values},
                request_snapshot.dump());
  }

  std::lock_guard lock(mutex_);
  auto [it, inserted] = embed_dims_.emplace(embedder.name, values.size());
  if (!inserted && it->second != values.size())
    throw GatewayError("embedder '" + embedder.name + "' changed dimension from " +
                       std::to_string(it->second) + " to " + std::to_string(values.size()));
  return values;
}

std::vector<BatchItem> Gateway::run_batch(const std::vector<ChatRequest>& requests,
                                          std::size_t max_in_flight) {
  if (max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
  std::vector<BatchItem> results(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= requests.size()) return;
      BatchItem item;
      item.index = i;
      try {
        item.text = complete(requests[i]);
        item.ok = true;
      } catch (const std::exception& e) {
        item.ok = false;
        item.error = e.what();
      }
      results[i] = std::move(item);
    }
  };

  const std::size_t n_threads = std::min(max_in_flight, requests.size());
  if (n_threads <= 1) {
    worker();
    return results;
  }
  std::vector<std::thread> threads;
  threads.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return results;
}

GatewayStats Gateway::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

}  // namespace modaudit
