#include <filesystem>
#include <random>
#include <set>

#include "doctest.h"
#include "modaudit/judge.hpp"
#include "modaudit/providers.hpp"

using namespace modaudit;
namespace fs = std::filesystem;

namespace {

const std::string kTemplateDir = std::string(MODAUDIT_SOURCE_DIR) + "/assets/templates";
const ModelProfile kProfile{"mock-model", 0.0, 256, ProviderKind::mock};

std::shared_ptr<Gateway> mock_gateway(const std::string& tag,
                                      std::shared_ptr<Provider> provider) {
  const auto cache_dir = fs::temp_directory_path() / ("judge_" + tag);
  fs::remove_all(cache_dir);
  auto gateway = std::make_shared<Gateway>(std::make_shared<DiskCache>(cache_dir),
                                           RetryPolicy{5, 0, 0});
  gateway->register_provider("mock-model", std::move(provider));
  return gateway;
}

std::vector<LabeledComment> benign_corpus(std::size_t n) {
  std::vector<LabeledComment> corpus;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledComment c;
    c.id = "b" + std::to_string(i);
    c.text = "comment " + std::to_string(i) + (i % 3 == 0 ? " politics" : " weather");
    c.gold_label = GoldLabel::benign;
    c.offensive_terms = std::vector<std::string>{};
    corpus.push_back(std::move(c));
  }
  return corpus;
}

std::vector<JudgmentRecord> flat_records(std::size_t flagged, std::size_t total,
                                         std::vector<LabeledComment>* cohort_out = nullptr) {
  std::vector<JudgmentRecord> records;
  std::vector<LabeledComment> cohort;
  for (std::size_t i = 0; i < total; ++i) {
    LabeledComment c;
    c.id = "r" + std::to_string(i);
    c.text = "text";
    c.gold_label = GoldLabel::benign;
    cohort.push_back(c);
    ParsedVerdict verdict;
    verdict.kind = VerdictKind::binary;
    verdict.flagged = i < flagged;
    verdict.raw_text = verdict.flagged ? "Yes" : "No";
    records.push_back({c.id, "mock-model", verdict, "binary-v1"});
  }
  if (cohort_out) *cohort_out = std::move(cohort);
  return records;
}

}  // namespace

TEST_CASE("rate_from_counts reproduces the binomial identities") {
  SUBCASE("49 of 5000") {
    const auto est = rate_from_counts(49, 5000);
    CHECK(est.rate == doctest::Approx(0.0098).epsilon(1e-12));
    CHECK(est.std_error == doctest::Approx(0.0014).epsilon(0.005));
    CHECK(est.std_error ==
          doctest::Approx(std::sqrt(0.0098 * (1 - 0.0098) / 5000)).epsilon(1e-12));
  }
  SUBCASE("0 of 100 is degenerate") {
    const auto est = rate_from_counts(0, 100);
    CHECK(est.rate == 0.0);
    CHECK(est.std_error == 0.0);
  }
  SUBCASE("30 of 1000") {
    const auto est = rate_from_counts(30, 1000);
    CHECK(est.rate == doctest::Approx(0.0300).epsilon(1e-12));
    CHECK(est.std_error == doctest::Approx(0.00539).epsilon(1e-3));
  }
  SUBCASE("invalid counts") {
    CHECK_THROWS_AS(rate_from_counts(1, 0), std::invalid_argument);
    CHECK_THROWS_AS(rate_from_counts(5, 4), std::invalid_argument);
  }
}

TEST_CASE("compute_rate counts flags and validates the cohort") {
  std::vector<LabeledComment> cohort;
  const auto records = flat_records(3, 10, &cohort);
  const auto est = compute_rate(records, cohort);
  CHECK(est.numerator == 3);
  CHECK(est.denominator == 10);
  CHECK(est.rate == doctest::Approx(0.3));

  SUBCASE("permutation invariance") {
    auto shuffled = records;
    std::mt19937_64 rng(2);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto est2 = compute_rate(shuffled, cohort);
    CHECK(est2.numerator == est.numerator);
    CHECK(est2.rate == est.rate);
  }
  SUBCASE("non-benign cohort rejected") {
    auto bad = cohort;
    bad[0].gold_label = GoldLabel::toxic;
    CHECK_THROWS_AS(compute_rate(records, bad), std::invalid_argument);
  }
  SUBCASE("record outside the cohort rejected") {
    auto extra = records;
    extra.push_back({"stranger", "mock-model", records[0].verdict, "binary-v1"});
    CHECK_THROWS_AS(compute_rate(extra, cohort), std::invalid_argument);
  }
  SUBCASE("empty records rejected") {
    CHECK_THROWS_AS(compute_rate({}, cohort), std::invalid_argument);
  }
}

TEST_CASE("judge_cohort produces one record per parseable comment") {
  auto gateway = mock_gateway(
      "cohort", std::make_shared<MockProvider>(
                    std::vector<MockProvider::Rule>{{"politics", "Yes"}}, "No"));
  const auto cohort = benign_corpus(10);
  const auto binary = load_template(kTemplateDir, TemplateName::binary_moderation);

  const auto records = judge_cohort(cohort, *gateway, binary, kProfile, {});
  REQUIRE(records.size() == 10);
  std::size_t flagged = 0;
  for (const auto& record : records) flagged += record.verdict.flagged ? 1 : 0;
  CHECK(flagged == 4);  // comments 0,3,6,9 carry the politics marker
  CHECK(records[0].prompt_version == "binary-v1");
}

TEST_CASE("judge_cohort rating mode with a constant 5 flags everything at threshold 4") {
  auto gateway = mock_gateway(
      "rating", std::make_shared<MockProvider>(std::vector<MockProvider::Rule>{}, "5"));
  const auto cohort = benign_corpus(8);
  const auto rating = load_template(kTemplateDir, TemplateName::rating_moderation);
  JudgeOptions options;
  options.mode = JudgeMode::rating;
  options.threshold = 4;
  const auto records = judge_cohort(cohort, *gateway, rating, kProfile, options);
  REQUIRE(records.size() == 8);
  for (const auto& record : records) {
    CHECK(record.verdict.flagged);
    CHECK(record.verdict.rating == 5);
  }
}

TEST_CASE("judge_cohort logs and excludes unparseable verdicts") {
  auto gateway = mock_gateway(
      "unparse", std::make_shared<MockProvider>(
                     std::vector<MockProvider::Rule>{{"politics", "I cannot determine"}}, "No"));
  const auto cohort = benign_corpus(9);
  const auto binary = load_template(kTemplateDir, TemplateName::binary_moderation);
  const auto log_path = fs::temp_directory_path() / "judge_unparse.jsonl";
  fs::remove(log_path);
  ParseFailureLog log(log_path.string());

  const auto records = judge_cohort(cohort, *gateway, binary, kProfile, {}, &log);
  CHECK(records.size() == 6);  // three marker comments were unparseable
  CHECK(log.count() == 3);
}

TEST_CASE("rerunning a judged cohort is served fully from cache") {
  const auto cache_dir = fs::temp_directory_path() / "judge_resume";
  fs::remove_all(cache_dir);
  const auto cohort = benign_corpus(12);
  const auto binary = load_template(kTemplateDir, TemplateName::binary_moderation);

  {
    Gateway gateway(std::make_shared<DiskCache>(cache_dir), {5, 0, 0});
    gateway.register_provider("mock-model", std::make_shared<MockProvider>());
    judge_cohort(cohort, gateway, binary, kProfile, {});
  }
  {
    Gateway gateway(std::make_shared<DiskCache>(cache_dir), {5, 0, 0});
    auto mock = std::make_shared<MockProvider>();
    gateway.register_provider("mock-model", mock);
    const auto records = judge_cohort(cohort, gateway, binary, kProfile, {});
    CHECK(records.size() == 12);
    CHECK(mock->completion_calls() == 0);
    CHECK(gateway.stats().cache_hits == 12);
  }
}

TEST_CASE("collect_false_positives caps the flagged set with seeded sampling") {
  const auto binary = load_template(kTemplateDir, TemplateName::binary_moderation);

  SUBCASE("flag-everything mock returns exactly max_size") {
    auto gateway = mock_gateway(
        "collect_all",
        std::make_shared<MockProvider>(std::vector<MockProvider::Rule>{}, "Yes"));
    const auto corpus = benign_corpus(120);
    CohortFilter filter;
    filter.require_benign = true;
    filter.require_no_offensive_terms = true;
    filter.max_chunks = 10;
    filter.max_size = 50;
    filter.seed = 7;
    const auto fp = collect_false_positives(corpus, *gateway, binary, kProfile, filter);
    CHECK(fp.size() == 50);
    const auto fp2 = collect_false_positives(corpus, *gateway, binary, kProfile, filter);
    for (std::size_t i = 0; i < fp.size(); ++i) CHECK(fp[i].id == fp2[i].id);
  }

  SUBCASE("flag-nothing mock returns an empty set") {
    auto gateway = mock_gateway(
        "collect_none", std::make_shared<MockProvider>(std::vector<MockProvider::Rule>{}, "No"));
    CohortFilter filter;
    filter.require_benign = true;
    filter.require_no_offensive_terms = true;
    filter.max_size = 50;
    CHECK(collect_false_positives(benign_corpus(30), *gateway, binary, kProfile, filter).empty());
  }

  SUBCASE("a fixed flag list is returned in full when under the cap") {
    auto gateway = mock_gateway(
        "collect_fixed", std::make_shared<MockProvider>(
                             std::vector<MockProvider::Rule>{{"politics", "Yes"}}, "No"));
    const auto corpus = benign_corpus(40);
    CohortFilter filter;
    filter.require_benign = true;
    filter.require_no_offensive_terms = true;
    filter.max_size = 5000;
    const auto fp = collect_false_positives(corpus, *gateway, binary, kProfile, filter);
    std::size_t expected = 0;
    for (const auto& rec : corpus) expected += rec.text.find("politics") != std::string::npos;
    CHECK(fp.size() == expected);
  }

  SUBCASE("false positives are a subset of the eligible cohort") {
    auto gateway = mock_gateway(
        "collect_subset", std::make_shared<MockProvider>(std::vector<MockProvider::Rule>{}, "Yes"));
    auto corpus = benign_corpus(60);
    corpus[5].offensive_terms = std::vector<std::string>{"idiot"};
    corpus[6].text = "a b c d e f g h i j k l";  // too long
    corpus[7].gold_label = GoldLabel::toxic;
    CohortFilter filter;
    filter.require_benign = true;
    filter.require_no_offensive_terms = true;
    filter.max_chunks = 10;
    filter.max_size = 5000;
    const auto fp = collect_false_positives(corpus, *gateway, binary, kProfile, filter);
    CohortFilter eligibility = filter;
    eligibility.max_size.reset();
    std::set<std::string> eligible_ids;
    for (const auto& rec : filter_cohort(corpus, eligibility)) eligible_ids.insert(rec.id);
    for (const auto& rec : fp) CHECK(eligible_ids.count(rec.id) == 1);
    CHECK(eligible_ids.count("b5") == 0);
    CHECK(eligible_ids.count("b6") == 0);
    CHECK(eligible_ids.count("b7") == 0);
  }
}

TEST_CASE("sample_true_negatives draws from non-flagged judgments") {
  std::vector<LabeledComment> cohort;
  const auto records = flat_records(20, 100, &cohort);  // 20 flagged, 80 negative

  SUBCASE("seeded sample of the requested size") {
    const auto tn = sample_true_negatives(cohort, records, 30, 11);
    CHECK(tn.size() == 30);
    const auto tn2 = sample_true_negatives(cohort, records, 30, 11);
    for (std::size_t i = 0; i < tn.size(); ++i) CHECK(tn[i].id == tn2[i].id);
  }
  SUBCASE("undersupply returns everything available") {
    const auto tn = sample_true_negatives(cohort, records, 5000, 11);
    CHECK(tn.size() == 80);
  }
  SUBCASE("disjoint from the flagged set") {
    const auto tn = sample_true_negatives(cohort, records, 80, 11);
    std::set<std::string> flagged_ids;
    for (const auto& record : records)
      if (record.verdict.flagged) flagged_ids.insert(record.comment_id);
    for (const auto& rec : tn) CHECK(flagged_ids.count(rec.id) == 0);
  }
}

TEST_CASE("elicit_scenarios parses per-comment scenarios") {
  const auto scenario_template = load_template(kTemplateDir, TemplateName::scenario_elicitation);

  SUBCASE("replayed responses match the recorded scenarios") {
    auto gateway = mock_gateway(
        "scenarios",
        std::make_shared<MockProvider>(
            std::vector<MockProvider::Rule>{
                {"Silence would suit you better",
                 "Answer: A participant in a heated online forum debate responding to another "
                 "user's argument."},
                {"doubtful any brain damage",
                 "Answer: A viewer joking during a TV show where a character known for silly or "
                 "reckless behavior has a minor accident."}},
            "Answer: Someone online."));
    std::vector<LabeledComment> comments(2);
    comments[0] = {"s1", "Silence would suit you better.", GoldLabel::benign, {}, ""};
    comments[1] = {"s2", "doubtful any brain damage will be noticeable.", GoldLabel::benign, {}, ""};
    const auto records =
        elicit_scenarios(comments, Cohort::false_positive, *gateway, scenario_template, kProfile);
    REQUIRE(records.size() == 2);
    CHECK(records[0].scenario_text ==
          "A participant in a heated online forum debate responding to another user's argument.");
    CHECK(records[1].scenario_text ==
          "A viewer joking during a TV show where a character known for silly or reckless "
          "behavior has a minor accident.");
    CHECK(records[0].cohort == Cohort::false_positive);
  }

  SUBCASE("a fixed mock scenario yields n identical records") {
    auto gateway = mock_gateway(
        "scenarios_fixed",
        std::make_shared<MockProvider>(std::vector<MockProvider::Rule>{}, "Answer: A cook."));
    const auto comments = benign_corpus(7);
    const auto records =
        elicit_scenarios(comments, Cohort::true_negative, *gateway, scenario_template, kProfile);
    REQUIRE(records.size() == 7);
    for (const auto& record : records) CHECK(record.scenario_text == "A cook.");
  }
}

TEST_CASE("annotate_offensive_terms fills the term lists") {
  const auto judge_template = load_template(kTemplateDir, TemplateName::offensive_term_judge);
  // the trigger must not appear in the judge prompt's own few-shot examples
  auto gateway = mock_gateway(
      "annotate", std::make_shared<MockProvider>(
                      std::vector<MockProvider::Rule>{{"bonehead", "bonehead, dingus"}}, "No"));
  auto corpus = benign_corpus(6);
  for (auto& rec : corpus) rec.offensive_terms.reset();
  corpus[2].text = "you are a total bonehead.";

  const auto annotated = annotate_offensive_terms(corpus, *gateway, judge_template, kProfile);
  REQUIRE(annotated.size() == 6);
  for (const auto& rec : annotated) REQUIRE(rec.offensive_terms.has_value());
  CHECK(annotated[2].offensive_terms->size() == 2);
  CHECK(annotated[0].offensive_terms->empty());
}

TEST_CASE("rating FPR is monotone in the threshold") {
  // responses scatter ratings 1..5; FPR at >=3 must dominate FPR at >=4
  auto rules = std::vector<MockProvider::Rule>{
      {"comment 1 ", "5"}, {"comment 2 ", "4"}, {"comment 3 ", "3"},
      {"comment 4 ", "2"}, {"comment 5 ", "1"},
  };
  const auto rating = load_template(kTemplateDir, TemplateName::rating_moderation);
  const auto cohort = benign_corpus(18);

  std::set<std::string> flagged3, flagged4;
  for (int threshold : {3, 4}) {
    auto gateway = mock_gateway("monotone_" + std::to_string(threshold),
                                std::make_shared<MockProvider>(rules, "2"));
    JudgeOptions options;
    options.mode = JudgeMode::rating;
    options.threshold = threshold;
    const auto records = judge_cohort(cohort, *gateway, rating, kProfile, options);
    auto& flagged = threshold == 3 ? flagged3 : flagged4;
    for (const auto& record : records)
      if (record.verdict.flagged) flagged.insert(record.comment_id);
  }
  CHECK(flagged3.size() >= flagged4.size());
  for (const auto& id : flagged4) CHECK(flagged3.count(id) == 1);  // superset, Table-2 style
}

TEST_CASE("per-group decomposition of false positives is exact") {
  std::mt19937_64 rng(5);
  auto corpus = benign_corpus(80);
  for (auto& rec : corpus)
    if (rng() % 3 == 0) rec.offensive_terms = std::vector<std::string>{"bad"};
  auto gateway = mock_gateway(
      "decomp", std::make_shared<MockProvider>(
                    std::vector<MockProvider::Rule>{{"politics", "Yes"}}, "No"));
  const auto binary = load_template(kTemplateDir, TemplateName::binary_moderation);
  const auto records = judge_cohort(corpus, *gateway, binary, kProfile, {});

  std::set<std::string> with_terms;
  for (const auto& rec : corpus)
    if (!rec.offensive_terms->empty()) with_terms.insert(rec.id);
  std::size_t total = 0, with_count = 0, without_count = 0;
  for (const auto& record : records) {
    if (!record.verdict.flagged) continue;
    ++total;
    (with_terms.count(record.comment_id) ? with_count : without_count)++;
  }
  CHECK(total == with_count + without_count);
}

TEST_CASE("judgment and scenario stores round-trip through JSONL") {
  std::vector<LabeledComment> cohort;
  const auto records = flat_records(2, 5, &cohort);
  const auto path = fs::temp_directory_path() / "judgments_roundtrip.jsonl";
  write_judgments(path.string(), records);
  const auto loaded = read_judgments(path.string());
  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].comment_id == records[i].comment_id);
    CHECK(loaded[i].verdict.flagged == records[i].verdict.flagged);
    CHECK(loaded[i].prompt_version == records[i].prompt_version);
  }

  std::vector<ScenarioRecord> scenarios = {
      {"c1", "A cook.", Cohort::false_positive, "mock-model"},
      {"c2", "A player.", Cohort::true_negative, "mock-model"},
  };
  const auto spath = fs::temp_directory_path() / "scenarios_roundtrip.jsonl";
  write_scenarios(spath.string(), scenarios);
  const auto sloaded = read_scenarios(spath.string());
  REQUIRE(sloaded.size() == 2);
  CHECK(sloaded[0].scenario_text == "A cook.");
  CHECK(sloaded[1].cohort == Cohort::true_negative);
}
