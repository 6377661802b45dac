#pragma once

#include <map>
#include <string>
#include <vector>

#include "modaudit/judge.hpp"

namespace modaudit {

enum class PrefixKey { pol, wok, dem, rep, neu };

const char* to_string(PrefixKey key);
PrefixKey prefix_key_from_string(const std::string& s);

/// A fixed topic-framing prefix; the text ends at the colon.
struct PrefixCondition {
  PrefixKey key = PrefixKey::neu;
  std::string text;
};

/// The five shipped conditions in report order: pol, wok, dem, rep, neu.
const std::vector<PrefixCondition>& default_prefix_conditions();
const PrefixCondition& prefix_condition(PrefixKey key);

/// prefix text + one space + comment, nothing else.
std::string build_prefixed_variant(const PrefixCondition& prefix, const std::string& comment_text);

/// Per-condition flag vectors over one shared comment list.
struct PairedFlagMatrix {
  std::vector<std::string> comment_ids;
  std::vector<PrefixKey> conditions;
  std::vector<std::vector<char>> flags;  // flags[condition][comment], 0 or 1
};

struct DeltaEstimate {
  double delta = 0.0;
  double paired_std_error = 0.0;
};

struct InterventionOutcome {
  std::string profile_name;
  std::size_t n = 0;
  std::size_t dropped = 0;  // comments removed from every condition to keep pairing
  std::vector<PrefixKey> conditions;
  std::map<PrefixKey, RateEstimate> per_condition;
  std::map<PrefixKey, DeltaEstimate> per_condition_delta;  // neu excluded
};

/// Pure aggregation over a flag matrix: FPR per condition, per-comment
/// deltas against the neutral condition, and the paired standard error
/// (sample stdev of the delta vector / sqrt(n)).
InterventionOutcome summarize_paired_flags(const PairedFlagMatrix& matrix,
                                           const std::string& profile_name,
                                           std::size_t dropped = 0);

/// Judges every prefixed variant of every comment under the rating prompt
/// and aggregates. A comment unjudged under any condition is dropped from
/// all conditions so the pairing stays intact.
InterventionOutcome run_intervention(const std::vector<LabeledComment>& benign_comments,
                                     const std::vector<PrefixCondition>& conditions,
                                     Gateway& gateway, const PromptTemplate& rating_template,
                                     const ModelProfile& profile, int threshold,
                                     RatingComparison comparison = RatingComparison::greater_equal,
                                     std::size_t max_in_flight = 8,
                                     ParseFailureLog* failures = nullptr);

/// Fixed-format table rows (condition, FPR+-SE, dFPR+-SE) in the order
/// pol, wok, dem, rep, neu, 4 decimals, leading zero dropped.
std::vector<std::string> report_intervention(const InterventionOutcome& outcome);

void write_intervention_json(const std::string& path, const InterventionOutcome& outcome);
InterventionOutcome read_intervention_json(const std::string& path);

/// Full-precision CSV (one row per condition) that round-trips to equal
/// values.
void write_intervention_csv(const std::string& path, const InterventionOutcome& outcome);
InterventionOutcome read_intervention_csv(const std::string& path);

}  // namespace modaudit
