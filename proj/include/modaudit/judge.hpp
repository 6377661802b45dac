#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "modaudit/corpus.hpp"
#include "modaudit/gap_stats.hpp"
#include "modaudit/gateway.hpp"
#include "modaudit/prompts.hpp"

namespace modaudit {

enum class JudgeMode { binary, rating };

const char* to_string(JudgeMode mode);
JudgeMode judge_mode_from_string(const std::string& s);

/// One model verdict for one comment under one prompt version.
struct JudgmentRecord {
  std::string comment_id;
  std::string profile_name;
  ParsedVerdict verdict;
  std::string prompt_version;
};

/// A binomial rate with its standard error sqrt(p*(1-p)/n).
struct RateEstimate {
  std::size_t numerator = 0;
  std::size_t denominator = 0;
  double rate = 0.0;
  double std_error = 0.0;
};

RateEstimate rate_from_counts(std::size_t numerator, std::size_t denominator);

struct ScenarioRecord {
  std::string comment_id;
  std::string scenario_text;
  Cohort cohort = Cohort::false_positive;
  std::string profile_name;
};

struct JudgeOptions {
  JudgeMode mode = JudgeMode::binary;
  int threshold = 4;
  RatingComparison comparison = RatingComparison::greater_equal;
  std::size_t max_in_flight = 8;
};

/// Judges every comment, one record per parseable response. Unparseable
/// responses and transport failures are logged and excluded; raw responses
/// land in the gateway cache, so interrupted runs resume without repeat
/// calls.
std::vector<JudgmentRecord> judge_cohort(const std::vector<LabeledComment>& cohort,
                                         Gateway& gateway, const PromptTemplate& tmpl,
                                         const ModelProfile& profile, const JudgeOptions& options,
                                         ParseFailureLog* failures = nullptr);

/// FPR over gold-benign records: flagged count / record count.
RateEstimate compute_rate(const std::vector<JudgmentRecord>& records,
                          const std::vector<LabeledComment>& gold_benign);

/// Benign, offensive-term-free, short comments flagged toxic under the
/// binary prompt, capped at filter.max_size by seeded sampling.
std::vector<LabeledComment> collect_false_positives(const std::vector<LabeledComment>& corpus,
                                                    Gateway& gateway,
                                                    const PromptTemplate& binary_template,
                                                    const ModelProfile& profile,
                                                    const CohortFilter& filter,
                                                    const JudgeOptions& options = {},
                                                    ParseFailureLog* failures = nullptr);

/// Seeded uniform sample of min(size, available) comments the model judged
/// non-toxic. Disjoint from the false-positive set by construction.
std::vector<LabeledComment> sample_true_negatives(const std::vector<LabeledComment>& cohort,
                                                  const std::vector<JudgmentRecord>& records,
                                                  std::size_t size, std::uint64_t seed);

/// One imagined scenario per comment via the few-shot elicitation prompt.
std::vector<ScenarioRecord> elicit_scenarios(const std::vector<LabeledComment>& comments,
                                             Cohort cohort, Gateway& gateway,
                                             const PromptTemplate& scenario_template,
                                             const ModelProfile& profile,
                                             std::size_t max_in_flight = 8,
                                             ParseFailureLog* failures = nullptr);

/// Fills offensive_terms on every record using the term-judge prompt.
/// Records whose judge call failed are dropped and logged.
std::vector<LabeledComment> annotate_offensive_terms(const std::vector<LabeledComment>& corpus,
                                                     Gateway& gateway,
                                                     const PromptTemplate& judge_template,
                                                     const ModelProfile& judge_profile,
                                                     std::size_t max_in_flight = 8,
                                                     ParseFailureLog* failures = nullptr);

// JSONL stores.
void write_judgments(const std::string& path, const std::vector<JudgmentRecord>& records);
std::vector<JudgmentRecord> read_judgments(const std::string& path);
void write_scenarios(const std::string& path, const std::vector<ScenarioRecord>& records);
std::vector<ScenarioRecord> read_scenarios(const std::string& path);
void write_annotated_corpus(const std::string& path, const std::vector<LabeledComment>& corpus);

}  // namespace modaudit
