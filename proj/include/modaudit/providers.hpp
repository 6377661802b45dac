#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <regex>
#include <string>
#include <vector>

#include "modaudit/gateway.hpp"

namespace modaudit {

/// Scripted offline backend. Rules are ECMAScript regexes matched top-down
/// against system prompt + "\n" + user message; the first match wins,
/// otherwise the default response is returned. Embeddings are a hashed
/// bag-of-words, so equal texts always embed identically.
class MockProvider : public Provider {
 public:
  struct Rule {
    std::string pattern;
    std::string response;
  };

  explicit MockProvider(std::vector<Rule> rules = {}, std::string default_response = "No",
                        std::size_t embed_dim = 64, int delay_ms = 0);

  /// Loads {"rules":[{"pattern","response"},...],"default_response":...,
  /// "embed_dim":...,"delay_ms":...} from a JSON script file.
  static std::shared_ptr<MockProvider> from_script(const std::string& path);

  std::string complete(const ChatRequest& request) override;
  std::vector<double> embed(const std::string& text, const ModelProfile& profile) override;

  std::uint64_t completion_calls() const { return completion_calls_.load(); }
  std::uint64_t embedding_calls() const { return embedding_calls_.load(); }
  std::uint64_t total_calls() const { return completion_calls() + embedding_calls(); }
  std::size_t peak_in_flight() const { return peak_in_flight_.load(); }

 private:
  struct CompiledRule {
    std::regex pattern;
    std::string response;
  };

  std::vector<CompiledRule> rules_;
  std::string default_response_;
  std::size_t embed_dim_;
  int delay_ms_;
  std::atomic<std::uint64_t> completion_calls_{0};
  std::atomic<std::uint64_t> embedding_calls_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> peak_in_flight_{0};
};

/// Hashed bag-of-words vector used by the mock embedder: lowercase
/// alphanumeric tokens, FNV-1a bucket per token, term frequency as value.
/// Text without tokens hashes whole so nonempty input never embeds to zero.
std::vector<double> hashed_bag_of_words(const std::string& text, std::size_t dim);

struct HttpEndpoint {
  std::string base_url;     // e.g. https://api.openai.com/v1
  std::string api_key_env;  // environment variable holding the credential
  int timeout_seconds = 120;
};

// Wire-shape builders and parsers, kept free so they can be tested without a
// transport.
std::string openai_chat_body(const ChatRequest& request);
std::string parse_openai_chat_response(const std::string& body);
std::string openai_embedding_body(const std::string& text, const ModelProfile& profile);
std::vector<double> parse_openai_embedding_response(const std::string& body);
std::string anthropic_messages_body(const ChatRequest& request);
std::string parse_anthropic_response(const std::string& body);

/// OpenAI-compatible chat-completions and embeddings endpoints.
class OpenAiProvider : public Provider {
 public:
  explicit OpenAiProvider(HttpEndpoint endpoint);
  std::string complete(const ChatRequest& request) override;
  std::vector<double> embed(const std::string& text, const ModelProfile& profile) override;

 private:
  HttpEndpoint endpoint_;
};

/// Anthropic-compatible messages endpoint (no embeddings).
class AnthropicProvider : public Provider {
 public:
  explicit AnthropicProvider(HttpEndpoint endpoint);
  std::string complete(const ChatRequest& request) override;
  std::vector<double> embed(const std::string& text, const ModelProfile& profile) override;

 private:
  HttpEndpoint endpoint_;
};

}  // namespace modaudit
