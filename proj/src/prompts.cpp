#include "modaudit/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace modaudit {

using nlohmann::json;

const char* to_string(TemplateName name) {
  switch (name) {
    case TemplateName::binary_moderation: return "binary_moderation";
    case TemplateName::rating_moderation: return "rating_moderation";
    case TemplateName::offensive_term_judge: return "offensive_term_judge";
    case TemplateName::scenario_elicitation: return "scenario_elicitation";
    case TemplateName::topic_summarization: return "topic_summarization";
  }
  return "unknown";
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

PromptTemplate load_template(const std::string& dir, TemplateName name) {
  const std::string path = dir + "/" + to_string(name) + ".txt";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PromptError("cannot open template asset: " + path);
  std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const auto version_end = contents.find('\n');
  if (version_end == std::string::npos || contents.rfind("version:", 0) != 0)
    throw PromptError(path + ": expected a leading 'version: <tag>' line");
  PromptTemplate tmpl;
  tmpl.name = name;
  tmpl.version = trim(contents.substr(8, version_end - 8));
  if (tmpl.version.empty()) throw PromptError(path + ": empty version tag");

  const std::string separator = "---\n";
  if (contents.compare(version_end + 1, separator.size(), separator) != 0)
    throw PromptError(path + ": expected '---' separator after the version line");
  tmpl.system_text = contents.substr(version_end + 1 + separator.size());
  if (tmpl.system_text.empty()) throw PromptError(path + ": empty template body");
  return tmpl;
}

RenderedPrompt render(const PromptTemplate& tmpl, const std::string& comment_text) {
  if (comment_text.empty()) throw std::invalid_argument("render() requires non-empty comment text");
  switch (tmpl.name) {
    case TemplateName::binary_moderation:
    case TemplateName::rating_moderation:
    case TemplateName::offensive_term_judge:
      return {tmpl.system_text, "Comment: " + comment_text};
    case TemplateName::scenario_elicitation:
      return {tmpl.system_text, "Comment: \"" + comment_text + "\""};
    case TemplateName::topic_summarization:
      throw std::invalid_argument("topic_summarization renders word lists; use render_topic_words");
  }
  throw std::invalid_argument("unknown template");
}

RenderedPrompt render_topic_words(const PromptTemplate& tmpl,
                                  const std::vector<std::string>& raw_words) {
  if (tmpl.name != TemplateName::topic_summarization)
    throw std::invalid_argument("render_topic_words requires the topic_summarization template");
  if (raw_words.empty()) throw std::invalid_argument("raw word list is empty");
  std::string joined;
  for (const auto& w : raw_words) {
    if (!joined.empty()) joined += " ";
    joined += w;
  }
  return {tmpl.system_text, "Raw words: " + joined + "."};
}

ChatRequest to_request(const RenderedPrompt& prompt, const ModelProfile& profile) {
  return ChatRequest{prompt.system_text, prompt.user_message, profile};
}

ParsedVerdict parse_binary(const std::string& raw) {
  std::string token;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (std::isalpha(static_cast<unsigned char>(raw[i]))) {
      while (i < raw.size() && std::isalpha(static_cast<unsigned char>(raw[i]))) {
        token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(raw[i]))));
        ++i;
      }
      break;
    }
  }
  ParsedVerdict verdict;
  verdict.kind = VerdictKind::binary;
  verdict.raw_text = raw;
  if (token == "yes") {
    verdict.flagged = true;
  } else if (token == "no") {
    verdict.flagged = false;
  } else {
    throw UnparseableError("first alphabetic token is neither yes nor no", raw);
  }
  return verdict;
}

ParsedVerdict parse_rating(const std::string& raw, int threshold, RatingComparison comparison) {
  if (threshold < 1 || threshold > 5)
    throw std::invalid_argument("rating threshold must be in [1,5]");
  std::optional<int> rating;
  for (std::size_t i = 0; i < raw.size() && !rating;) {
    if (std::isdigit(static_cast<unsigned char>(raw[i]))) {
      std::size_t start = i;
      while (i < raw.size() && std::isdigit(static_cast<unsigned char>(raw[i]))) ++i;
      const std::string run = raw.substr(start, i - start);
      if (run.size() <= 9) {
        const int value = std::stoi(run);
        if (value >= 1 && value <= 5) rating = value;
      }
    } else {
      ++i;
    }
  }
  if (!rating) throw UnparseableError("no integer in [1,5] found", raw);
  ParsedVerdict verdict;
  verdict.kind = VerdictKind::rating;
  verdict.rating = rating;
  verdict.raw_text = raw;
  verdict.flagged = comparison == RatingComparison::greater_equal ? *rating >= threshold
                                                                  : *rating > threshold;
  return verdict;
}

std::vector<std::string> parse_offensive_terms(const std::string& raw) {
  std::string normalized = trim(raw);
  while (!normalized.empty()) {
    const char c = normalized.back();
    if (c == '.' || c == '!' || c == '?' || c == ',' || c == ';' || c == ':') {
      normalized.pop_back();
    } else {
      break;
    }
  }
  if (to_lower(trim(normalized)) == "no") return {};

  std::vector<std::string> terms;
  std::stringstream ss(raw);
  std::string piece;
  while (std::getline(ss, piece, ',')) {
    std::string term = trim(piece);
    if (!term.empty()) terms.push_back(std::move(term));
  }
  return terms;
}

std::string parse_scenario(const std::string& raw) {
  std::string text = trim(raw);
  const std::string label = "answer:";
  if (to_lower(text.substr(0, label.size())) == label) text = trim(text.substr(label.size()));
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    line = trim(line);
    if (!line.empty()) return line;
  }
  throw UnparseableError("scenario text is empty", raw);
}

TopicDefinition summarize_topic(const std::vector<std::string>& raw_words, Gateway& gateway,
                                const PromptTemplate& tmpl, const ModelProfile& profile) {
  if (raw_words.empty()) throw std::invalid_argument("summarize_topic requires raw words");
  const std::string raw = gateway.complete(to_request(render_topic_words(tmpl, raw_words), profile));

  std::optional<std::string> label;
  std::optional<std::vector<std::string>> keywords;
  std::stringstream ss(raw);
  std::string line;
  while (std::getline(ss, line)) {
    const std::string lower = to_lower(line);
    if (!label && lower.rfind("topic:", 0) == 0) {
      label = trim(line.substr(6));
    } else if (!keywords && lower.rfind("keywords:", 0) == 0) {
      std::vector<std::string> list;
      std::stringstream ks(line.substr(9));
      std::string piece;
      while (std::getline(ks, piece, ',')) {
        std::string k = trim(piece);
        if (!k.empty()) list.push_back(std::move(k));
      }
      keywords = std::move(list);
    }
  }
  if (!label || label->empty())
    throw UnparseableError("summarization response has no 'Topic:' line", raw);
  if (!keywords || keywords->empty())
    throw UnparseableError("summarization response has no 'Keywords:' line", raw);
  return TopicDefinition{*label, *keywords, TopicCatalogKind::scenario_prominent};
}

void ParseFailureLog::append(const ParseFailure& failure) {
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw PromptError("cannot append to parse-failure log: " + path_);
  out << json{{"id", failure.id},
              {"template", failure.template_name},
              {"raw_text", failure.raw_text},
              {"reason", failure.reason}}
             .dump()
      << "\n";
  ++count_;
}

}  // namespace modaudit
