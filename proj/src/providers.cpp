#include "modaudit/providers.hpp"

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace modaudit {

using nlohmann::json;

namespace {

class InFlightGuard {
 public:
  InFlightGuard(std::atomic<std::size_t>& counter, std::atomic<std::size_t>& peak)
      : counter_(counter) {
    const std::size_t now = counter_.fetch_add(1) + 1;
    std::size_t prev = peak.load();
    while (prev < now && !peak.compare_exchange_weak(prev, now)) {
    }
  }
  ~InFlightGuard() { counter_.fetch_sub(1); }

 private:
  std::atomic<std::size_t>& counter_;
};

}  // namespace

MockProvider::MockProvider(std::vector<Rule> rules, std::string default_response,
                           std::size_t embed_dim, int delay_ms)
    : default_response_(std::move(default_response)), embed_dim_(embed_dim), delay_ms_(delay_ms) {
  if (embed_dim_ == 0) throw std::invalid_argument("mock embed_dim must be >= 1");
  rules_.reserve(rules.size());
  for (auto& rule : rules)
    rules_.push_back({std::regex(rule.pattern, std::regex::ECMAScript), std::move(rule.response)});
}

std::shared_ptr<MockProvider> MockProvider::from_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mock script: " + path);
  json obj;
  in >> obj;
  std::vector<Rule> rules;
  for (const auto& r : obj.value("rules", json::array()))
    rules.push_back({r.at("pattern").get<std::string>(), r.at("response").get<std::string>()});
  return std::make_shared<MockProvider>(std::move(rules), obj.value("default_response", "No"),
                                        obj.value("embed_dim", std::size_t{64}),
                                        obj.value("delay_ms", 0));
}

std::string MockProvider::complete(const ChatRequest& request) {
  InFlightGuard guard(in_flight_, peak_in_flight_);
  completion_calls_.fetch_add(1);
  if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
  const std::string haystack = request.system_prompt + "\n" + request.user_message;
  for (const auto& rule : rules_) {
    if (std::regex_search(haystack, rule.pattern)) return rule.response;
  }
  return default_response_;
}

std::vector<double> hashed_bag_of_words(const std::string& text, std::size_t dim) {
  const auto fnv1a = [](std::string_view token) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : token) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    return h;
  };
  std::vector<double> v(dim, 0.0);
  std::string token;
  bool any = false;
  const auto flush = [&] {
    if (!token.empty()) {
      v[fnv1a(token) % dim] += 1.0;
      token.clear();
      any = true;
    }
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      flush();
    }
  }
  flush();
  if (!any) v[fnv1a(text) % dim] += 1.0;
  return v;
}

std::vector<double> MockProvider::embed(const std::string& text, const ModelProfile&) {
  InFlightGuard guard(in_flight_, peak_in_flight_);
  embedding_calls_.fetch_add(1);
  if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
  return hashed_bag_of_words(text, embed_dim_);
}

// ---------------------------------------------------------------------------
// HTTP backends

std::string openai_chat_body(const ChatRequest& request) {
  return json{
      {"model", request.profile.name},
      {"temperature", request.profile.temperature},
      {"max_tokens", request.profile.max_output_tokens},
      {"messages",
       json::array({json{{"role", "system"}, {"content", request.system_prompt}},
                    json{{"role", "user"}, {"content", request.user_message}}})},
  }
      .dump();
}

std::string parse_openai_chat_response(const std::string& body) {
  try {
    const json obj = json::parse(body);
    return obj.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed chat-completions response: ") + e.what(),
                        /*retryable=*/false);
  }
}

std::string openai_embedding_body(const std::string& text, const ModelProfile& profile) {
  return json{{"model", profile.name}, {"input", text}}.dump();
}

std::vector<double> parse_openai_embedding_response(const std::string& body) {
  try {
    const json obj = json::parse(body);
    return obj.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed embeddings response: ") + e.what(),
                        /*retryable=*/false);
  }
}

std::string anthropic_messages_body(const ChatRequest& request) {
  return json{
      {"model", request.profile.name},
      {"max_tokens", request.profile.max_output_tokens},
      {"temperature", request.profile.temperature},
      {"system", request.system_prompt},
      {"messages", json::array({json{{"role", "user"}, {"content", request.user_message}}})},
  }
      .dump();
}

std::string parse_anthropic_response(const std::string& body) {
  try {
    const json obj = json::parse(body);
    return obj.at("content").at(0).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed messages response: ") + e.what(),
                        /*retryable=*/false);
  }
}

namespace {

struct SplitUrl {
  std::string host;  // scheme://authority
  std::string path_prefix;
};

SplitUrl split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos)
    throw ProviderError("base_url must include a scheme: " + base_url, /*retryable=*/false);
  const auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, path_start), prefix};
}

std::string require_api_key(const HttpEndpoint& endpoint) {
  if (endpoint.api_key_env.empty())
    throw ProviderError("no credential variable configured for endpoint " + endpoint.base_url,
                        /*retryable=*/false);
  const char* key = std::getenv(endpoint.api_key_env.c_str());
  if (!key || !*key)
    throw ProviderError("missing credentials: environment variable " + endpoint.api_key_env +
                            " is not set",
                        /*retryable=*/false);
  return key;
}

std::string http_post(const HttpEndpoint& endpoint, const std::string& path,
                      const httplib::Headers& headers, const std::string& body) {
  const SplitUrl url = split_base_url(endpoint.base_url);
  httplib::Client client(url.host);
  client.set_connection_timeout(endpoint.timeout_seconds);
  client.set_read_timeout(endpoint.timeout_seconds);
  client.set_write_timeout(endpoint.timeout_seconds);
  auto res = client.Post(url.path_prefix + path, headers, body, "application/json");
  if (!res)
    throw ProviderError("transport failure: " + httplib::to_string(res.error()),
                        /*retryable=*/true);
  if (res->status == 429 || res->status >= 500)
    throw ProviderError("provider returned status " + std::to_string(res->status),
                        /*retryable=*/true, res->status);
  if (res->status < 200 || res->status >= 300)
    throw ProviderError("provider returned status " + std::to_string(res->status) + ": " +
                            res->body.substr(0, 512),
                        /*retryable=*/false, res->status);
  return res->body;
}

}  // namespace

OpenAiProvider::OpenAiProvider(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

std::string OpenAiProvider::complete(const ChatRequest& request) {
  const httplib::Headers headers = {{"Authorization", "Bearer " + require_api_key(endpoint_)}};
  return parse_openai_chat_response(
      http_post(endpoint_, "/chat/completions", headers, openai_chat_body(request)));
}

std::vector<double> OpenAiProvider::embed(const std::string& text, const ModelProfile& profile) {
  const httplib::Headers headers = {{"Authorization", "Bearer " + require_api_key(endpoint_)}};
  return parse_openai_embedding_response(
      http_post(endpoint_, "/embeddings", headers, openai_embedding_body(text, profile)));
}

AnthropicProvider::AnthropicProvider(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

std::string AnthropicProvider::complete(const ChatRequest& request) {
  const httplib::Headers headers = {{"x-api-key", require_api_key(endpoint_)},
                                    {"anthropic-version", "2023-06-01"}};
  return parse_anthropic_response(
      http_post(endpoint_, "/messages", headers, anthropic_messages_body(request)));
}

std::vector<double> AnthropicProvider::embed(const std::string&, const ModelProfile& profile) {
  throw ProviderError("profile '" + profile.name + "': anthropic-compatible endpoints expose no embeddings",
                      /*retryable=*/false);
}

}  // namespace modaudit
