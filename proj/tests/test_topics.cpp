#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "modaudit/providers.hpp"
#include "modaudit/topics.hpp"

using namespace modaudit;
namespace fs = std::filesystem;

namespace {

const std::string kCatalogPath = std::string(MODAUDIT_SOURCE_DIR) + "/assets/topics/paper_v1.json";

std::shared_ptr<Gateway> mock_gateway(const std::string& tag) {
  const auto cache_dir = fs::temp_directory_path() / ("topics_" + tag);
  fs::remove_all(cache_dir);
  auto gateway = std::make_shared<Gateway>(std::make_shared<DiskCache>(cache_dir),
                                           RetryPolicy{5, 0, 0});
  gateway->register_provider("mock-embed", std::make_shared<MockProvider>());
  return gateway;
}

const ModelProfile kEmbedder{"mock-embed", 0.0, 256, ProviderKind::mock};

// Direct bag-of-words cosine over the mock's construction; the oracle for
// relevance values.
double bow_cosine(const std::string& a, const std::string& b) {
  const auto va = hashed_bag_of_words(a, 64);
  const auto vb = hashed_bag_of_words(b, 64);
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    dot += va[i] * vb[i];
    na += va[i] * va[i];
    nb += vb[i] * vb[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

TEST_CASE("shipped catalog carries 17 scenario-prominent and 8 general topics") {
  const auto catalog = load_topic_catalog(kCatalogPath);
  CHECK(catalog.version == "paper-v1");
  CHECK(catalog.count(TopicCatalogKind::scenario_prominent) == 17);
  CHECK(catalog.count(TopicCatalogKind::general) == 8);
  validate(catalog);

  const auto builtin = default_topic_catalog();
  REQUIRE(builtin.topics.size() == catalog.topics.size());
  for (std::size_t i = 0; i < builtin.topics.size(); ++i) {
    CHECK(builtin.topics[i].label == catalog.topics[i].label);
    CHECK(builtin.topics[i].keywords == catalog.topics[i].keywords);
    CHECK(builtin.topics[i].catalog == catalog.topics[i].catalog);
  }
}

TEST_CASE("topic_text joins keywords and excludes the label") {
  TopicDefinition workplace{"workplace",
                            {"coworker", "company", "colleague", "office"},
                            TopicCatalogKind::scenario_prominent};
  CHECK(topic_text(workplace) == "coworker, company, colleague, office");

  TopicDefinition white{"white", {"white people"}, TopicCatalogKind::general};
  CHECK(topic_text(white) == "white people");
}

TEST_CASE("catalog validation rejects malformed topics") {
  TopicCatalog catalog;
  catalog.topics.push_back({"", {"k"}, TopicCatalogKind::general});
  CHECK_THROWS_AS(validate(catalog), TopicError);
  catalog.topics = {{"a", {}, TopicCatalogKind::general}};
  CHECK_THROWS_AS(validate(catalog), TopicError);
  catalog.topics = {{"a", {"k"}, TopicCatalogKind::general},
                    {"a", {"j"}, TopicCatalogKind::general}};
  CHECK_THROWS_AS(validate(catalog), TopicError);
  // same label across catalogs is allowed
  catalog.topics = {{"a", {"k"}, TopicCatalogKind::general},
                    {"a", {"j"}, TopicCatalogKind::scenario_prominent}};
  CHECK_NOTHROW(validate(catalog));
}

TEST_CASE("catalog round-trips through serialization with identical topic_text") {
  const auto catalog = load_topic_catalog(kCatalogPath);
  const auto path = fs::temp_directory_path() / "catalog_roundtrip.json";
  save_topic_catalog(path.string(), catalog);
  const auto reloaded = load_topic_catalog(path.string());
  REQUIRE(reloaded.topics.size() == catalog.topics.size());
  for (std::size_t i = 0; i < catalog.topics.size(); ++i)
    CHECK(topic_text(reloaded.topics[i]) == topic_text(catalog.topics[i]));
}

TEST_CASE("relevance is cosine against the joined keyword text") {
  auto gateway = mock_gateway("relevance");
  const TopicDefinition topic{"politics",
                              {"politics", "government", "election", "voter", "policies"},
                              TopicCatalogKind::scenario_prominent};

  SUBCASE("self-similarity is 1") {
    CHECK(relevance(topic, topic_text(topic), *gateway, kEmbedder) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("disjoint vocabulary gives 0 when buckets do not collide") {
    const TopicDefinition tiny{"t", {"qqq"}, TopicCatalogKind::general};
    // chosen so the two tokens land in different hash buckets
    const auto va = hashed_bag_of_words("qqq", 64);
    const auto vb = hashed_bag_of_words("zzz", 64);
    double dot = 0;
    for (std::size_t i = 0; i < va.size(); ++i) dot += va[i] * vb[i];
    REQUIRE(dot == 0.0);
    CHECK(relevance(tiny, "zzz", *gateway, kEmbedder) == 0.0);
  }

  SUBCASE("matches the explicit bag-of-words oracle") {
    const std::string text = "the politics of the election are heated";
    CHECK(relevance(topic, text, *gateway, kEmbedder) ==
          doctest::Approx(bow_cosine(topic_text(topic), text)).epsilon(1e-12));
  }

  SUBCASE("empty text is rejected") {
    CHECK_THROWS_AS(relevance(topic, "", *gateway, kEmbedder), std::invalid_argument);
  }
}

TEST_CASE("relevance is invariant under positive scaling of either vector") {
  // "dog dog" embeds to exactly twice "dog" under term frequency
  auto gateway = mock_gateway("scale");
  const TopicDefinition topic{"t", {"dog"}, TopicCatalogKind::general};
  const double once = relevance(topic, "dog cat", *gateway, kEmbedder);
  const TopicDefinition doubled{"t", {"dog dog"}, TopicCatalogKind::general};
  const double twice = relevance(doubled, "dog cat", *gateway, kEmbedder);
  CHECK(once == doctest::Approx(twice).epsilon(1e-12));
}

TEST_CASE("relevance gap subtracts comment relevance from scenario relevance") {
  auto gateway = mock_gateway("gap");
  const TopicDefinition topic{"politics",
                              {"politics", "government", "election", "voter", "policies"},
                              TopicCatalogKind::scenario_prominent};
  const std::string scenario = "a politician debating government policies before an election";
  const std::string comment = "nice weather for a walk";

  const double gap = relevance_gap(topic, scenario, comment, *gateway, kEmbedder);
  const double oracle = bow_cosine(topic_text(topic), scenario) -
                        bow_cosine(topic_text(topic), comment);
  CHECK(gap == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(gap > 0.0);

  SUBCASE("identical texts give zero gap") {
    CHECK(relevance_gap(topic, comment, comment, *gateway, kEmbedder) == 0.0);
  }

  SUBCASE("antisymmetry in the two texts") {
    const double forward = relevance_gap(topic, scenario, comment, *gateway, kEmbedder);
    const double backward = relevance_gap(topic, comment, scenario, *gateway, kEmbedder);
    CHECK(forward == doctest::Approx(-backward).epsilon(1e-15));
  }

  SUBCASE("bounded by [-2, 2] and relevance by [-1, 1]") {
    CHECK(gap >= -2.0);
    CHECK(gap <= 2.0);
    const double r = relevance(topic, scenario, *gateway, kEmbedder);
    CHECK(r >= -1.0);
    CHECK(r <= 1.0);
  }
}

TEST_CASE("alternative topic embedding modes stay available") {
  auto gateway = mock_gateway("modes");
  const TopicDefinition topic{"sport", {"sport", "player"}, TopicCatalogKind::scenario_prominent};
  const std::string text = "the player won the game";
  const double joined = relevance(topic, text, *gateway, kEmbedder,
                                  TopicEmbeddingMode::keywords_joined);
  const double labeled = relevance(topic, text, *gateway, kEmbedder,
                                   TopicEmbeddingMode::label_and_keywords);
  const double mean = relevance(topic, text, *gateway, kEmbedder,
                                TopicEmbeddingMode::keyword_mean);
  CHECK(std::isfinite(joined));
  CHECK(std::isfinite(labeled));
  CHECK(std::isfinite(mean));
  // keyword_mean averages per-keyword embeddings; same support, same cosine here
  CHECK(mean == doctest::Approx(joined).epsilon(1e-12));
}

TEST_CASE("cosine_similarity validates dimensions and norms") {
  CHECK_THROWS_AS(cosine_similarity(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(cosine_similarity(std::vector<double>{0.0}, std::vector<double>{1.0}),
                  std::invalid_argument);
  CHECK(cosine_similarity(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 2.0}) == 0.0);
}
