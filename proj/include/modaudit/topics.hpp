#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "modaudit/gateway.hpp"

namespace modaudit {

enum class TopicCatalogKind { scenario_prominent, general };

const char* to_string(TopicCatalogKind kind);
TopicCatalogKind catalog_kind_from_string(const std::string& s);

/// A topic label plus its descriptive keyword list; relevance is computed
/// against the keywords, not the label.
struct TopicDefinition {
  std::string label;
  std::vector<std::string> keywords;
  TopicCatalogKind catalog = TopicCatalogKind::scenario_prominent;
};

struct TopicCatalog {
  std::vector<TopicDefinition> topics;
  std::string version;

  std::size_t count(TopicCatalogKind kind) const;
};

struct TopicError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Throws TopicError on empty labels/keywords or duplicate (label, catalog).
void validate(const TopicCatalog& catalog);

TopicCatalog load_topic_catalog(const std::string& path);
void save_topic_catalog(const std::string& path, const TopicCatalog& catalog);

/// Comma-space-joined keyword list, label excluded.
std::string topic_text(const TopicDefinition& topic);

/// How a topic is turned into an embedding. keywords_joined embeds the
/// joined keyword list; the variants exist for sensitivity analysis.
enum class TopicEmbeddingMode { keywords_joined, label_and_keywords, keyword_mean };

const char* to_string(TopicEmbeddingMode mode);
TopicEmbeddingMode embedding_mode_from_string(const std::string& s);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

std::vector<double> topic_embedding(const TopicDefinition& topic, Gateway& gateway,
                                    const ModelProfile& embedder,
                                    TopicEmbeddingMode mode = TopicEmbeddingMode::keywords_joined);

/// cosine(E(topic), E(text)), both embeddings served through the cache.
double relevance(const TopicDefinition& topic, const std::string& text, Gateway& gateway,
                 const ModelProfile& embedder,
                 TopicEmbeddingMode mode = TopicEmbeddingMode::keywords_joined);

/// relevance(topic, scenario) - relevance(topic, comment).
double relevance_gap(const TopicDefinition& topic, const std::string& scenario_text,
                     const std::string& comment_text, Gateway& gateway,
                     const ModelProfile& embedder,
                     TopicEmbeddingMode mode = TopicEmbeddingMode::keywords_joined);

/// The topic sets shipped with the audit: 17 scenario-prominent topics and 8
/// general ones, version tag "paper-v1".
TopicCatalog default_topic_catalog();

}  // namespace modaudit
