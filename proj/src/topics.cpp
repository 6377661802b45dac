#include "modaudit/topics.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"

namespace modaudit {

using nlohmann::json;

const char* to_string(TopicCatalogKind kind) {
  return kind == TopicCatalogKind::scenario_prominent ? "scenario_prominent" : "general";
}

TopicCatalogKind catalog_kind_from_string(const std::string& s) {
  if (s == "scenario_prominent") return TopicCatalogKind::scenario_prominent;
  if (s == "general") return TopicCatalogKind::general;
  throw TopicError("unknown topic catalog kind: " + s);
}

const char* to_string(TopicEmbeddingMode mode) {
  switch (mode) {
    case TopicEmbeddingMode::keywords_joined: return "keywords_joined";
    case TopicEmbeddingMode::label_and_keywords: return "label_and_keywords";
    case TopicEmbeddingMode::keyword_mean: return "keyword_mean";
  }
  return "unknown";
}

TopicEmbeddingMode embedding_mode_from_string(const std::string& s) {
  if (s == "keywords_joined") return TopicEmbeddingMode::keywords_joined;
  if (s == "label_and_keywords") return TopicEmbeddingMode::label_and_keywords;
  if (s == "keyword_mean") return TopicEmbeddingMode::keyword_mean;
  throw TopicError("unknown topic embedding mode: " + s);
}

std::size_t TopicCatalog::count(TopicCatalogKind kind) const {
  std::size_t n = 0;
  for (const auto& t : topics)
    if (t.catalog == kind) ++n;
  return n;
}

void validate(const TopicCatalog& catalog) {
  std::set<std::pair<std::string, TopicCatalogKind>> seen;
  for (const auto& topic : catalog.topics) {
    if (topic.label.empty()) throw TopicError("topic with empty label");
    if (topic.keywords.empty()) throw TopicError("topic '" + topic.label + "' has no keywords");
    for (const auto& k : topic.keywords)
      if (k.empty()) throw TopicError("topic '" + topic.label + "' has an empty keyword");
    if (!seen.insert({topic.label, topic.catalog}).second)
      throw TopicError("duplicate topic '" + topic.label + "' in catalog " +
                       to_string(topic.catalog));
  }
}

TopicCatalog load_topic_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TopicError("cannot open topic catalog: " + path);
  json obj;
  try {
    in >> obj;
  } catch (const json::exception& e) {
    throw TopicError(path + ": invalid JSON: " + e.what());
  }
  TopicCatalog catalog;
  catalog.version = obj.value("version", "");
  for (const auto& t : obj.at("topics")) {
    TopicDefinition topic;
    topic.label = t.at("label").get<std::string>();
    topic.keywords = t.at("keywords").get<std::vector<std::string>>();
    topic.catalog = catalog_kind_from_string(t.at("catalog").get<std::string>());
    catalog.topics.push_back(std::move(topic));
  }
  validate(catalog);
  return catalog;
}

void save_topic_catalog(const std::string& path, const TopicCatalog& catalog) {
  validate(catalog);
  json topics = json::array();
  for (const auto& t : catalog.topics)
    topics.push_back(
        {{"label", t.label}, {"keywords", t.keywords}, {"catalog", to_string(t.catalog)}});
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TopicError("cannot write topic catalog: " + path);
  out << json{{"version", catalog.version}, {"topics", topics}}.dump(2) << "\n";
}

std::string topic_text(const TopicDefinition& topic) {
  std::string out;
  for (const auto& k : topic.keywords) {
    if (!out.empty()) out += ", ";
    out += k;
  }
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine_similarity: dimension mismatch (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0)
    throw std::invalid_argument("cosine_similarity: zero-norm vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> topic_embedding(const TopicDefinition& topic, Gateway& gateway,
                                    const ModelProfile& embedder, TopicEmbeddingMode mode) {
  switch (mode) {
    case TopicEmbeddingMode::keywords_joined:
      return gateway.embed(topic_text(topic), embedder);
    case TopicEmbeddingMode::label_and_keywords:
      return gateway.embed(topic.label + ", " + topic_text(topic), embedder);
    case TopicEmbeddingMode::keyword_mean: {
      std::vector<double> mean;
      for (const auto& keyword : topic.keywords) {
        auto v = gateway.embed(keyword, embedder);
        if (mean.empty()) mean.assign(v.size(), 0.0);
        for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i];
      }
      for (auto& x : mean) x /= static_cast<double>(topic.keywords.size());
      return mean;
    }
  }
  throw std::invalid_argument("unknown topic embedding mode");
}

double relevance(const TopicDefinition& topic, const std::string& text, Gateway& gateway,
                 const ModelProfile& embedder, TopicEmbeddingMode mode) {
  if (text.empty()) throw std::invalid_argument("relevance() requires non-empty text");
  const auto topic_vec = topic_embedding(topic, gateway, embedder, mode);
  const auto text_vec = gateway.embed(text, embedder);
  return cosine_similarity(topic_vec, text_vec);
}

double relevance_gap(const TopicDefinition& topic, const std::string& scenario_text,
                     const std::string& comment_text, Gateway& gateway,
                     const ModelProfile& embedder, TopicEmbeddingMode mode) {
  return relevance(topic, scenario_text, gateway, embedder, mode) -
         relevance(topic, comment_text, gateway, embedder, mode);
}

TopicCatalog default_topic_catalog() {
  TopicCatalog catalog;
  catalog.version = "paper-v1";
  const auto add = [&](const char* label, std::vector<std::string> keywords,
                       TopicCatalogKind kind) {
    catalog.topics.push_back({label, std::move(keywords), kind});
  };
  const auto scenario = TopicCatalogKind::scenario_prominent;
  add("celebrity", {"celebrity", "influencer"}, scenario);
  add("workplace", {"coworker", "company", "colleague", "office"}, scenario);
  add("customer", {"customer", "service"}, scenario);
  add("media", {"user", "comment", "social media"}, scenario);
  add("debate", {"debate", "argument", "confront"}, scenario);
  add("entertainment", {"viewer", "live", "stream", "video", "broadcast"}, scenario);
  add("healthcare", {"healthcare", "drug safety", "abortion"}, scenario);
  add("conspiracy", {"conspiracy", "theorist", "extremist"}, scenario);
  add("cultures", {"cultural", "regional", "historical"}, scenario);
  add("politics", {"politics", "government", "election", "voter", "policies"}, scenario);
  add("internet", {"internet", "comment", "response", "online"}, scenario);
  add("education", {"student", "teacher", "class", "school", "university"}, scenario);
  add("community", {"community", "resident", "neighborhood"}, scenario);
  add("television", {"television", "reality", "documentary", "drama", "comedy"}, scenario);
  add("sport", {"sport", "player", "team", "game"}, scenario);
  add("radio", {"radio", "host", "talk", "discussing"}, scenario);
  add("comedy", {"comedy", "comedian", "joke", "stand-up", "satirical"}, scenario);

  const auto general = TopicCatalogKind::general;
  add("black", {"black people", "african"}, general);
  add("white", {"white people"}, general);
  add("hispanic", {"latino", "hispanic", "mexican"}, general);
  add("asian", {"asian", "chinese"}, general);
  add("democrats", {"the left", "democrats"}, general);
  add("republicans", {"the right", "republicans"}, general);
  add("men", {"men", "male"}, general);
  add("women", {"women", "female"}, general);
  return catalog;
}

}  // namespace modaudit
