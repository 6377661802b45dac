#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "modaudit/prompts.hpp"
#include "modaudit/providers.hpp"

using namespace modaudit;
namespace fs = std::filesystem;

namespace {

const std::string kTemplateDir = std::string(MODAUDIT_SOURCE_DIR) + "/assets/templates";

PromptTemplate tmpl(TemplateName name) { return load_template(kTemplateDir, name); }

}  // namespace

TEST_CASE("template assets load with version tags and stable bodies") {
  const auto binary = tmpl(TemplateName::binary_moderation);
  CHECK(binary.version == "binary-v1");
  CHECK(binary.system_text ==
        "Do you think the given comment is toxic? Simply answer 'Yes' or 'No'.\n");

  const auto scenario = tmpl(TemplateName::scenario_elicitation);
  CHECK(scenario.version == "scenario-v1");
  CHECK(scenario.system_text.find("Another guy to put down-range.") != std::string::npos);
  CHECK(scenario.system_text.find("who is most likely to make it") != std::string::npos);

  const auto rating = tmpl(TemplateName::rating_moderation);
  CHECK(rating.system_text.find("1 to 5") != std::string::npos);

  const auto judge = tmpl(TemplateName::offensive_term_judge);
  CHECK(judge.system_text.find("stupid, idiot") != std::string::npos);

  // One-shot block ends with the worked Keywords line.
  const auto summary = tmpl(TemplateName::topic_summarization);
  CHECK(summary.system_text.ends_with("Keywords: social media, comment, post, user, respond\n"));
}

TEST_CASE("render wraps comments per template family") {
  const auto binary = tmpl(TemplateName::binary_moderation);
  const auto rendered = render(binary, "Yes you are.");
  CHECK(rendered.system_text == binary.system_text);
  CHECK(rendered.user_message == "Comment: Yes you are.");

  const auto scenario = render(tmpl(TemplateName::scenario_elicitation), "Yes you are.");
  CHECK(scenario.user_message == "Comment: \"Yes you are.\"");

  CHECK_THROWS_AS(render(binary, ""), std::invalid_argument);
  CHECK_THROWS_AS(render(tmpl(TemplateName::topic_summarization), "words"),
                  std::invalid_argument);

  const auto words = render_topic_words(tmpl(TemplateName::topic_summarization),
                                        {"media", "social", "user"});
  CHECK(words.user_message == "Raw words: media social user.");
}

TEST_CASE("template rendering is injective in the comment text") {
  std::mt19937_64 rng(13);
  const auto binary = tmpl(TemplateName::binary_moderation);
  std::set<std::string> comments, messages;
  for (int i = 0; i < 500; ++i) {
    std::string text;
    for (int k = 0; k <= static_cast<int>(rng() % 20); ++k)
      text.push_back(static_cast<char>('a' + rng() % 26));
    if (comments.insert(text).second) messages.insert(render(binary, text).user_message);
  }
  CHECK(messages.size() == comments.size());
}

TEST_CASE("parse_binary reads the first alphabetic token") {
  CHECK(parse_binary("Yes").flagged);
  CHECK(parse_binary("YES!").flagged);
  CHECK(parse_binary(" yes, considering the insult").flagged);
  CHECK_FALSE(parse_binary("no.").flagged);
  CHECK_FALSE(parse_binary("No").flagged);
  CHECK_FALSE(parse_binary("\"No\"").flagged);

  for (const char* bad : {"I cannot determine", "maybe", "", "1234", "Nope", "yess"}) {
    CHECK_THROWS_AS(parse_binary(bad), UnparseableError);
  }
  try {
    parse_binary("I cannot determine");
  } catch (const UnparseableError& e) {
    CHECK(e.raw_text == "I cannot determine");
  }
}

TEST_CASE("parse_rating takes the first integer in [1,5]") {
  CHECK(parse_rating("4", 4).flagged);
  CHECK(parse_rating("4", 4).rating == 4);
  CHECK(parse_rating("Toxicity: 2/5", 4).rating == 2);
  CHECK_FALSE(parse_rating("Toxicity: 2/5", 4).flagged);
  CHECK(parse_rating("3", 3).flagged);  // >= semantics at the boundary
  CHECK(parse_rating("rating 10 is invalid but 5 works", 4).rating == 5);
  CHECK(parse_rating("I would say 3 out of 5.", 3).flagged);

  CHECK_THROWS_AS(parse_rating("no digits here", 4), UnparseableError);
  CHECK_THROWS_AS(parse_rating("0", 4), UnparseableError);
  CHECK_THROWS_AS(parse_rating("67", 4), UnparseableError);
  CHECK_THROWS_AS(parse_rating("3", 0), std::invalid_argument);

  SUBCASE("strict comparison variant") {
    CHECK_FALSE(parse_rating("4", 4, RatingComparison::strictly_greater).flagged);
    CHECK(parse_rating("5", 4, RatingComparison::strictly_greater).flagged);
  }
}

TEST_CASE("parse_rating is threshold-monotone") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const int value = 1 + static_cast<int>(rng() % 5);
    const std::string raw = "score: " + std::to_string(value);
    for (int k = 2; k <= 5; ++k) {
      const bool at_k = parse_rating(raw, k).flagged;
      const bool at_lower = parse_rating(raw, k - 1).flagged;
      if (at_k) CHECK(at_lower);  // flagged at k implies flagged at every threshold <= k
    }
  }
}

TEST_CASE("parse_offensive_terms follows the judge contract") {
  CHECK(parse_offensive_terms("stupid, idiot") == std::vector<std::string>{"stupid", "idiot"});
  CHECK(parse_offensive_terms("No").empty());
  CHECK(parse_offensive_terms("No.").empty());
  CHECK(parse_offensive_terms("no!").empty());
  CHECK(parse_offensive_terms(" idiot ") == std::vector<std::string>{"idiot"});
  CHECK(parse_offensive_terms("a, , b") == std::vector<std::string>{"a", "b"});

  std::mt19937_64 rng(17);
  for (int i = 0; i < 200; ++i) {
    std::string raw;
    for (int k = 0; k < 4; ++k) {
      raw += (k ? "," : "");
      for (int c = 0; c < static_cast<int>(rng() % 6); ++c)
        raw.push_back(rng() % 5 ? static_cast<char>('a' + rng() % 26) : ' ');
    }
    for (const auto& term : parse_offensive_terms(raw)) {
      CHECK(term.find(',') == std::string::npos);
      CHECK_FALSE(term.empty());
      CHECK(term.front() != ' ');
      CHECK(term.back() != ' ');
    }
  }
}

TEST_CASE("parse_scenario strips the Answer label and keeps one line") {
  CHECK(parse_scenario("Answer: A participant in a heated online forum debate responding to "
                       "another user's argument.") ==
        "A participant in a heated online forum debate responding to another user's argument.");
  CHECK(parse_scenario("An animal rights activist posting in an online forum discussion about "
                       "hunting laws.") ==
        "An animal rights activist posting in an online forum discussion about hunting laws.");
  CHECK(parse_scenario("Answer:\n  A viewer joking during a TV show.\nMore detail.") ==
        "A viewer joking during a TV show.");
  CHECK_THROWS_AS(parse_scenario("   "), UnparseableError);
  CHECK_THROWS_AS(parse_scenario("Answer:"), UnparseableError);
}

TEST_CASE("summarize_topic parses the Topic and Keywords lines via the gateway") {
  const auto cache_dir = fs::temp_directory_path() / "prompts_summarize";
  fs::remove_all(cache_dir);
  Gateway gateway(std::make_shared<DiskCache>(cache_dir), {5, 0, 0});
  const ModelProfile profile{"mock-model", 0.0, 256, ProviderKind::mock};
  const auto summary_template = tmpl(TemplateName::topic_summarization);

  SUBCASE("worked example") {
    gateway.register_provider(
        "mock-model",
        std::make_shared<MockProvider>(
            std::vector<MockProvider::Rule>{},
            "Topic: social media\nKeywords: social media, comment, post, user, respond"));
    const auto topic = summarize_topic({"media", "social", "user", "responding"}, gateway,
                                       summary_template, profile);
    CHECK(topic.label == "social media");
    CHECK(topic.keywords ==
          std::vector<std::string>{"social media", "comment", "post", "user", "respond"});
  }

  SUBCASE("sport row") {
    gateway.register_provider("mock-model",
                              std::make_shared<MockProvider>(
                                  std::vector<MockProvider::Rule>{},
                                  "Topic: sport\nKeywords: sport, player, team, game"));
    const auto topic = summarize_topic({"sport", "game"}, gateway, summary_template, profile);
    CHECK(topic.label == "sport");
    CHECK(topic.keywords.size() == 4);
  }

  SUBCASE("missing Topic line is a contract violation") {
    gateway.register_provider("mock-model",
                              std::make_shared<MockProvider>(std::vector<MockProvider::Rule>{},
                                                             "these are just words"));
    CHECK_THROWS_AS(summarize_topic({"w"}, gateway, summary_template, profile), UnparseableError);
  }

  SUBCASE("empty word list is rejected") {
    gateway.register_provider("mock-model", std::make_shared<MockProvider>());
    CHECK_THROWS_AS(summarize_topic({}, gateway, summary_template, profile),
                    std::invalid_argument);
  }
}

TEST_CASE("binary verdicts round-trip the scripted mock intent") {
  const auto cache_dir = fs::temp_directory_path() / "prompts_roundtrip";
  fs::remove_all(cache_dir);
  Gateway gateway(std::make_shared<DiskCache>(cache_dir), {5, 0, 0});
  const ModelProfile profile{"mock-model", 0.0, 256, ProviderKind::mock};
  gateway.register_provider(
      "mock-model", std::make_shared<MockProvider>(
                        std::vector<MockProvider::Rule>{{"politics", "Yes"}, {"sports", "No"}},
                        "No"));

  const auto binary = tmpl(TemplateName::binary_moderation);
  const auto flag_of = [&](const std::string& text) {
    return parse_binary(gateway.complete(to_request(render(binary, text), profile))).flagged;
  };
  CHECK(flag_of("talking about politics today"));
  CHECK_FALSE(flag_of("talking about sports today"));
  CHECK_FALSE(flag_of("talking about gardening today"));
}

TEST_CASE("parse failure log appends JSONL entries") {
  const auto path = fs::temp_directory_path() / "parse_failures_test.jsonl";
  fs::remove(path);
  ParseFailureLog log(path.string());
  log.append({"c1", "binary_moderation", "I cannot determine", "unparseable"});
  log.append({"c2", "binary_moderation", "???", "unparseable"});
  CHECK(log.count() == 2);

  std::ifstream in(path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(line.find("binary_moderation") != std::string::npos);
  }
  CHECK(lines == 2);
}
