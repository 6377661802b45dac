#include "modaudit/judge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace modaudit {

using nlohmann::json;

const char* to_string(JudgeMode mode) { return mode == JudgeMode::binary ? "binary" : "rating"; }

JudgeMode judge_mode_from_string(const std::string& s) {
  if (s == "binary") return JudgeMode::binary;
  if (s == "rating") return JudgeMode::rating;
  throw std::invalid_argument("unknown judge mode: " + s);
}

RateEstimate rate_from_counts(std::size_t numerator, std::size_t denominator) {
  if (denominator == 0) throw std::invalid_argument("rate denominator is zero");
  if (numerator > denominator)
    throw std::invalid_argument("rate numerator exceeds denominator");
  RateEstimate est;
  est.numerator = numerator;
  est.denominator = denominator;
  est.rate = static_cast<double>(numerator) / static_cast<double>(denominator);
  est.std_error = std::sqrt(est.rate * (1.0 - est.rate) / static_cast<double>(denominator));
  return est;
}

std::vector<JudgmentRecord> judge_cohort(const std::vector<LabeledComment>& cohort,
                                         Gateway& gateway, const PromptTemplate& tmpl,
                                         const ModelProfile& profile, const JudgeOptions& options,
                                         ParseFailureLog* failures) {
  if (cohort.empty()) throw std::invalid_argument("judge_cohort requires a nonempty cohort");
  const bool rating = options.mode == JudgeMode::rating;
  if (rating && tmpl.name != TemplateName::rating_moderation)
    throw std::invalid_argument("rating mode needs the rating_moderation template");
  if (!rating && tmpl.name != TemplateName::binary_moderation)
    throw std::invalid_argument("binary mode needs the binary_moderation template");

  std::vector<ChatRequest> requests;
  requests.reserve(cohort.size());
  for (const auto& comment : cohort) requests.push_back(to_request(render(tmpl, comment.text), profile));

  const auto results = gateway.run_batch(requests, options.max_in_flight);

  std::vector<JudgmentRecord> records;
  records.reserve(results.size());
  for (const auto& item : results) {
    const auto& comment = cohort[item.index];
    if (!item.ok) {
      if (failures)
        failures->append({comment.id, to_string(tmpl.name), "", "gateway: " + item.error});
      continue;
    }
    try {
      ParsedVerdict verdict = rating
                                  ? parse_rating(item.text, options.threshold, options.comparison)
                                  : parse_binary(item.text);
      records.push_back({comment.id, profile.name, std::move(verdict), tmpl.version});
    } catch (const UnparseableError& e) {
      if (failures) failures->append({comment.id, to_string(tmpl.name), e.raw_text, e.what()});
    }
  }
  return records;
}

RateEstimate compute_rate(const std::vector<JudgmentRecord>& records,
                          const std::vector<LabeledComment>& gold_benign) {
  std::unordered_set<std::string_view> benign_ids;
  benign_ids.reserve(gold_benign.size());
  for (const auto& rec : gold_benign) {
    if (rec.gold_label != GoldLabel::benign)
      throw std::invalid_argument("compute_rate cohort contains a non-benign record: " + rec.id);
    benign_ids.insert(rec.id);
  }
  if (records.empty()) throw std::invalid_argument("compute_rate has an empty denominator");
  std::size_t flagged = 0;
  for (const auto& record : records) {
    if (!benign_ids.contains(record.comment_id))
      throw std::invalid_argument("judgment for comment '" + record.comment_id +
                                  "' which is not in the benign cohort");
    if (record.verdict.flagged) ++flagged;
  }
  return rate_from_counts(flagged, records.size());
}

std::vector<LabeledComment> collect_false_positives(const std::vector<LabeledComment>& corpus,
                                                    Gateway& gateway,
                                                    const PromptTemplate& binary_template,
                                                    const ModelProfile& profile,
                                                    const CohortFilter& filter,
                                                    const JudgeOptions& options,
                                                    ParseFailureLog* failures) {
  CohortFilter predicates = filter;
  predicates.max_size.reset();  // the cap applies to the flagged set, not the cohort
  const auto eligible = filter_cohort(corpus, predicates);
  if (eligible.empty()) return {};

  JudgeOptions judge_options = options;
  judge_options.mode = JudgeMode::binary;
  const auto records =
      judge_cohort(eligible, gateway, binary_template, profile, judge_options, failures);

  std::unordered_set<std::string_view> flagged_ids;
  for (const auto& record : records)
    if (record.verdict.flagged) flagged_ids.insert(record.comment_id);

  std::vector<LabeledComment> flagged;
  for (const auto& comment : eligible)
    if (flagged_ids.contains(comment.id)) flagged.push_back(comment);

  if (filter.max_size && flagged.size() > *filter.max_size) {
    const auto picks = seeded_sample_indices(flagged.size(), *filter.max_size, filter.seed);
    std::vector<LabeledComment> capped;
    capped.reserve(picks.size());
    for (std::size_t i : picks) capped.push_back(std::move(flagged[i]));
    return capped;
  }
  return flagged;
}

std::vector<LabeledComment> sample_true_negatives(const std::vector<LabeledComment>& cohort,
                                                  const std::vector<JudgmentRecord>& records,
                                                  std::size_t size, std::uint64_t seed) {
  std::unordered_set<std::string_view> negative_ids;
  for (const auto& record : records)
    if (!record.verdict.flagged) negative_ids.insert(record.comment_id);

  std::vector<LabeledComment> negatives;
  for (const auto& comment : cohort)
    if (negative_ids.contains(comment.id)) negatives.push_back(comment);

  if (negatives.size() <= size) return negatives;
  const auto picks = seeded_sample_indices(negatives.size(), size, seed);
  std::vector<LabeledComment> sampled;
  sampled.reserve(picks.size());
  for (std::size_t i : picks) sampled.push_back(std::move(negatives[i]));
  return sampled;
}

std::vector<ScenarioRecord> elicit_scenarios(const std::vector<LabeledComment>& comments,
                                             Cohort cohort, Gateway& gateway,
                                             const PromptTemplate& scenario_template,
                                             const ModelProfile& profile,
                                             std::size_t max_in_flight,
                                             ParseFailureLog* failures) {
  if (comments.empty()) throw std::invalid_argument("elicit_scenarios requires comments");
  if (scenario_template.name != TemplateName::scenario_elicitation)
    throw std::invalid_argument("elicit_scenarios needs the scenario_elicitation template");

  std::vector<ChatRequest> requests;
  requests.reserve(comments.size());
  for (const auto& comment : comments)
    requests.push_back(to_request(render(scenario_template, comment.text), profile));

  const auto results = gateway.run_batch(requests, max_in_flight);
  std::vector<ScenarioRecord> records;
  records.reserve(results.size());
  for (const auto& item : results) {
    const auto& comment = comments[item.index];
    if (!item.ok) {
      if (failures)
        failures->append(
            {comment.id, to_string(scenario_template.name), "", "gateway: " + item.error});
      continue;
    }
    try {
      records.push_back({comment.id, parse_scenario(item.text), cohort, profile.name});
    } catch (const UnparseableError& e) {
      if (failures)
        failures->append({comment.id, to_string(scenario_template.name), e.raw_text, e.what()});
    }
  }
  return records;
}

std::vector<LabeledComment> annotate_offensive_terms(const std::vector<LabeledComment>& corpus,
                                                     Gateway& gateway,
                                                     const PromptTemplate& judge_template,
                                                     const ModelProfile& judge_profile,
                                                     std::size_t max_in_flight,
                                                     ParseFailureLog* failures) {
  if (judge_template.name != TemplateName::offensive_term_judge)
    throw std::invalid_argument("annotate_offensive_terms needs the offensive_term_judge template");
  if (corpus.empty()) return {};

  std::vector<ChatRequest> requests;
  requests.reserve(corpus.size());
  for (const auto& comment : corpus)
    requests.push_back(to_request(render(judge_template, comment.text), judge_profile));

  const auto results = gateway.run_batch(requests, max_in_flight);
  std::vector<LabeledComment> annotated;
  annotated.reserve(corpus.size());
  for (const auto& item : results) {
    if (!item.ok) {
      if (failures)
        failures->append(
            {corpus[item.index].id, to_string(judge_template.name), "", "gateway: " + item.error});
      continue;
    }
    LabeledComment comment = corpus[item.index];
    comment.offensive_terms = parse_offensive_terms(item.text);
    annotated.push_back(std::move(comment));
  }
  return annotated;
}

// ---------------------------------------------------------------------------
// JSONL stores

namespace {

json verdict_to_json(const ParsedVerdict& verdict) {
  json obj = {
      {"kind", verdict.kind == VerdictKind::binary ? "binary" : "rating"},
      {"flagged", verdict.flagged},
      {"raw_text", verdict.raw_text},
  };
  if (verdict.rating) obj["rating"] = *verdict.rating;
  return obj;
}

ParsedVerdict verdict_from_json(const json& obj) {
  ParsedVerdict verdict;
  verdict.kind = obj.at("kind").get<std::string>() == "rating" ? VerdictKind::rating
                                                               : VerdictKind::binary;
  verdict.flagged = obj.at("flagged").get<bool>();
  verdict.raw_text = obj.value("raw_text", "");
  if (obj.contains("rating")) verdict.rating = obj.at("rating").get<int>();
  return verdict;
}

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write: " + path);
  return out;
}

template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace

void write_judgments(const std::string& path, const std::vector<JudgmentRecord>& records) {
  auto out = open_for_write(path);
  for (const auto& record : records) {
    out << json{{"comment_id", record.comment_id},
                {"profile_name", record.profile_name},
                {"prompt_version", record.prompt_version},
                {"verdict", verdict_to_json(record.verdict)}}
               .dump()
        << "\n";
  }
}

std::vector<JudgmentRecord> read_judgments(const std::string& path) {
  std::vector<JudgmentRecord> records;
  for_each_jsonl(path, [&](const json& obj) {
    records.push_back({obj.at("comment_id").get<std::string>(),
                       obj.at("profile_name").get<std::string>(),
                       verdict_from_json(obj.at("verdict")),
                       obj.at("prompt_version").get<std::string>()});
  });
  return records;
}

void write_scenarios(const std::string& path, const std::vector<ScenarioRecord>& records) {
  auto out = open_for_write(path);
  for (const auto& record : records) {
    out << json{{"comment_id", record.comment_id},
                {"scenario_text", record.scenario_text},
                {"cohort", to_string(record.cohort)},
                {"profile_name", record.profile_name}}
               .dump()
        << "\n";
  }
}

std::vector<ScenarioRecord> read_scenarios(const std::string& path) {
  std::vector<ScenarioRecord> records;
  for_each_jsonl(path, [&](const json& obj) {
    records.push_back({obj.at("comment_id").get<std::string>(),
                       obj.at("scenario_text").get<std::string>(),
                       cohort_from_string(obj.at("cohort").get<std::string>()),
                       obj.at("profile_name").get<std::string>()});
  });
  return records;
}

void write_annotated_corpus(const std::string& path, const std::vector<LabeledComment>& corpus) {
  auto out = open_for_write(path);
  for (const auto& comment : corpus) {
    json obj = {
        {"id", comment.id},
        {"text", comment.text},
        {"label", to_string(comment.gold_label)},
        {"source", comment.source},
    };
    if (comment.offensive_terms) obj["offensive_terms"] = *comment.offensive_terms;
    out << obj.dump() << "\n";
  }
}

}  // namespace modaudit
