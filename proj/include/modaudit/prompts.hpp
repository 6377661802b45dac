#pragma once

#include <atomic>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "modaudit/gateway.hpp"
#include "modaudit/topics.hpp"

namespace modaudit {

enum class TemplateName {
  binary_moderation,
  rating_moderation,
  offensive_term_judge,
  scenario_elicitation,
  topic_summarization,
};

const char* to_string(TemplateName name);

struct PromptError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A verdict the first token of which could not be read as intended. The raw
/// model text travels with the error so failures can be logged and audited.
struct UnparseableError : PromptError {
  UnparseableError(const std::string& reason, std::string raw)
      : PromptError(reason), raw_text(std::move(raw)) {}
  std::string raw_text;
};

/// One prompt asset. The few-shot examples are part of the system text, so
/// rendering is byte-stable for a fixed version tag.
struct PromptTemplate {
  TemplateName name = TemplateName::binary_moderation;
  std::string version;
  std::string system_text;
};

/// Reads <dir>/<name>.txt. Asset format: a "version: <tag>" line, a "---"
/// separator, then the system text verbatim.
PromptTemplate load_template(const std::string& dir, TemplateName name);

struct RenderedPrompt {
  std::string system_text;
  std::string user_message;
};

/// Moderation and judge templates wrap the comment as "Comment: <text>";
/// the scenario template quotes it to match its few-shot block.
RenderedPrompt render(const PromptTemplate& tmpl, const std::string& comment_text);

/// Formats a raw topic-model word list for the summarization template.
RenderedPrompt render_topic_words(const PromptTemplate& tmpl,
                                  const std::vector<std::string>& raw_words);

ChatRequest to_request(const RenderedPrompt& prompt, const ModelProfile& profile);

enum class VerdictKind { binary, rating };

struct ParsedVerdict {
  VerdictKind kind = VerdictKind::binary;
  bool flagged = false;
  std::optional<int> rating;  // present iff kind == rating
  std::string raw_text;
};

enum class RatingComparison { greater_equal, strictly_greater };

/// "Yes"/"No" by the first alphabetic token, case-insensitive.
ParsedVerdict parse_binary(const std::string& raw);

/// First integer in [1,5] found in the text is the rating; flagged compares
/// it against the threshold (>= by default, > available via config).
ParsedVerdict parse_rating(const std::string& raw, int threshold,
                           RatingComparison comparison = RatingComparison::greater_equal);

/// "No" (any case, optional trailing punctuation) means no terms; anything
/// else is split on commas. Entries come back trimmed and nonempty.
std::vector<std::string> parse_offensive_terms(const std::string& raw);

/// Strips an optional leading "Answer:" label and returns the first nonempty
/// line of scenario text.
std::string parse_scenario(const std::string& raw);

/// Issues the topic-summarization prompt and parses the "Topic:" and
/// "Keywords:" lines of the response.
TopicDefinition summarize_topic(const std::vector<std::string>& raw_words, Gateway& gateway,
                                const PromptTemplate& tmpl, const ModelProfile& profile);

struct ParseFailure {
  std::string id;
  std::string template_name;
  std::string raw_text;
  std::string reason;
};

/// JSONL log of judgments that could not be parsed; these are excluded from
/// every rate denominator and reported separately.
class ParseFailureLog {
 public:
  explicit ParseFailureLog(std::string path) : path_(std::move(path)) {}
  void append(const ParseFailure& failure);
  std::size_t count() const { return count_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::atomic<std::size_t> count_{0};
  std::mutex mutex_;
};

}  // namespace modaudit
