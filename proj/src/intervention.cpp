#include "modaudit/intervention.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace modaudit {

using nlohmann::json;

const char* to_string(PrefixKey key) {
  switch (key) {
    case PrefixKey::pol: return "pol";
    case PrefixKey::wok: return "wok";
    case PrefixKey::dem: return "dem";
    case PrefixKey::rep: return "rep";
    case PrefixKey::neu: return "neu";
  }
  return "unknown";
}

PrefixKey prefix_key_from_string(const std::string& s) {
  if (s == "pol") return PrefixKey::pol;
  if (s == "wok") return PrefixKey::wok;
  if (s == "dem") return PrefixKey::dem;
  if (s == "rep") return PrefixKey::rep;
  if (s == "neu") return PrefixKey::neu;
  throw std::invalid_argument("unknown prefix condition: " + s);
}

const std::vector<PrefixCondition>& default_prefix_conditions() {
  static const std::vector<PrefixCondition> conditions = {
      {PrefixKey::pol, "In a discussion about politics, a politician commented:"},
      {PrefixKey::wok, "In a discussion about workplace, a colleague commented:"},
      {PrefixKey::dem, "In a discussion about politics, a Democrat commented:"},
      {PrefixKey::rep, "In a discussion about politics, a Republican commented:"},
      {PrefixKey::neu, "In a discussion about something, someone commented:"},
  };
  return conditions;
}

const PrefixCondition& prefix_condition(PrefixKey key) {
  for (const auto& condition : default_prefix_conditions())
    if (condition.key == key) return condition;
  throw std::invalid_argument("no shipped prefix condition for key");
}

std::string build_prefixed_variant(const PrefixCondition& prefix,
                                   const std::string& comment_text) {
  if (comment_text.empty())
    throw std::invalid_argument("build_prefixed_variant requires non-empty comment text");
  return prefix.text + " " + comment_text;
}

namespace {

std::size_t find_condition(const std::vector<PrefixKey>& conditions, PrefixKey key) {
  for (std::size_t i = 0; i < conditions.size(); ++i)
    if (conditions[i] == key) return i;
  throw std::invalid_argument("paired summary requires the neu condition");
}

// Report order, and the order rows are emitted in.
const PrefixKey kCanonicalOrder[] = {PrefixKey::pol, PrefixKey::wok, PrefixKey::dem,
                                     PrefixKey::rep, PrefixKey::neu};

std::string format4(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", value);
  std::string s = buf;
  // Paper-style rates: ".0188" rather than "0.0188".
  if (s.rfind("0.", 0) == 0) return s.substr(1);
  if (s.rfind("-0.", 0) == 0) return "-" + s.substr(2);
  return s;
}

std::string format_full(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

}  // namespace

InterventionOutcome summarize_paired_flags(const PairedFlagMatrix& matrix,
                                           const std::string& profile_name, std::size_t dropped) {
  if (matrix.conditions.size() != matrix.flags.size())
    throw std::invalid_argument("flag matrix has a column count mismatch");
  const std::size_t n = matrix.comment_ids.size();
  if (n == 0) throw std::invalid_argument("flag matrix is empty");
  for (const auto& column : matrix.flags)
    if (column.size() != n)
      throw std::invalid_argument("flag vector length differs from comment list length");

  const std::size_t neu_col = find_condition(matrix.conditions, PrefixKey::neu);

  InterventionOutcome outcome;
  outcome.profile_name = profile_name;
  outcome.n = n;
  outcome.dropped = dropped;
  outcome.conditions = matrix.conditions;

  std::vector<std::size_t> numerators(matrix.conditions.size(), 0);
  for (std::size_t c = 0; c < matrix.conditions.size(); ++c) {
    for (char flag : matrix.flags[c]) numerators[c] += flag ? 1 : 0;
    outcome.per_condition[matrix.conditions[c]] = rate_from_counts(numerators[c], n);
  }

  const auto& neu_flags = matrix.flags[neu_col];
  for (std::size_t c = 0; c < matrix.conditions.size(); ++c) {
    if (matrix.conditions[c] == PrefixKey::neu) continue;
    // Per-comment deltas are in {-1, 0, +1}; with p up-flips and m
    // down-flips, sum(d) = p - m and sum(d^2) = p + m.
    std::size_t up = 0, down = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int d = static_cast<int>(matrix.flags[c][i]) - static_cast<int>(neu_flags[i]);
      if (d > 0) ++up;
      if (d < 0) ++down;
    }
    DeltaEstimate estimate;
    estimate.delta = (static_cast<double>(up) - static_cast<double>(down)) / static_cast<double>(n);
    if (n >= 2) {
      const double nn = static_cast<double>(n);
      const double sum_d = static_cast<double>(up) - static_cast<double>(down);
      const double sum_d2 = static_cast<double>(up + down);
      const double variance = std::max(0.0, (sum_d2 - sum_d * sum_d / nn) / (nn - 1.0));
      estimate.paired_std_error = std::sqrt(variance / nn);
    }
    outcome.per_condition_delta[matrix.conditions[c]] = estimate;
  }
  return outcome;
}

InterventionOutcome run_intervention(const std::vector<LabeledComment>& benign_comments,
                                     const std::vector<PrefixCondition>& conditions,
                                     Gateway& gateway, const PromptTemplate& rating_template,
                                     const ModelProfile& profile, int threshold,
                                     RatingComparison comparison, std::size_t max_in_flight,
                                     ParseFailureLog* failures) {
  if (benign_comments.empty()) throw std::invalid_argument("run_intervention requires comments");
  if (rating_template.name != TemplateName::rating_moderation)
    throw std::invalid_argument("run_intervention follows the rating protocol; pass the rating template");
  bool has_neu = false;
  for (const auto& condition : conditions) has_neu |= condition.key == PrefixKey::neu;
  if (!has_neu) throw std::invalid_argument("run_intervention requires the neu condition");
  for (const auto& comment : benign_comments)
    if (comment.gold_label != GoldLabel::benign)
      throw std::invalid_argument("run_intervention requires gold-benign comments; got '" +
                                  comment.id + "'");

  // verdicts[condition][comment]; -1 marks unjudged.
  std::vector<std::vector<int>> verdicts(conditions.size(),
                                         std::vector<int>(benign_comments.size(), -1));
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    std::vector<ChatRequest> requests;
    requests.reserve(benign_comments.size());
    for (const auto& comment : benign_comments) {
      requests.push_back(to_request(
          render(rating_template, build_prefixed_variant(conditions[c], comment.text)), profile));
    }
    const auto results = gateway.run_batch(requests, max_in_flight);
    for (const auto& item : results) {
      const auto& comment = benign_comments[item.index];
      if (!item.ok) {
        if (failures)
          failures->append({comment.id,
                            std::string("intervention/") + to_string(conditions[c].key), "",
                            "gateway: " + item.error});
        continue;
      }
      try {
        const auto verdict = parse_rating(item.text, threshold, comparison);
        verdicts[c][item.index] = verdict.flagged ? 1 : 0;
      } catch (const UnparseableError& e) {
        if (failures)
          failures->append({comment.id,
                            std::string("intervention/") + to_string(conditions[c].key),
                            e.raw_text, e.what()});
      }
    }
  }

  PairedFlagMatrix matrix;
  for (const auto& condition : conditions) matrix.conditions.push_back(condition.key);
  matrix.flags.resize(conditions.size());
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < benign_comments.size(); ++i) {
    bool complete = true;
    for (std::size_t c = 0; c < conditions.size(); ++c) complete &= verdicts[c][i] >= 0;
    if (!complete) {
      ++dropped;
      continue;
    }
    matrix.comment_ids.push_back(benign_comments[i].id);
    for (std::size_t c = 0; c < conditions.size(); ++c)
      matrix.flags[c].push_back(static_cast<char>(verdicts[c][i]));
  }
  return summarize_paired_flags(matrix, profile.name, dropped);
}

std::vector<std::string> report_intervention(const InterventionOutcome& outcome) {
  std::vector<std::string> rows;
  for (PrefixKey key : kCanonicalOrder) {
    const auto it = outcome.per_condition.find(key);
    if (it == outcome.per_condition.end()) continue;
    const RateEstimate& rate = it->second;
    double delta = 0.0, delta_se = 0.0;
    if (const auto dit = outcome.per_condition_delta.find(key);
        dit != outcome.per_condition_delta.end()) {
      delta = dit->second.delta;
      delta_se = dit->second.paired_std_error;
    }
    std::string row = to_string(key);
    row += " " + format4(rate.rate) + "±" + format4(rate.std_error);
    row += " Δ" + format4(delta) + "±" + format4(delta_se);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_intervention_json(const std::string& path, const InterventionOutcome& outcome) {
  json per_condition = json::object();
  for (const auto& [key, rate] : outcome.per_condition) {
    per_condition[to_string(key)] = {{"numerator", rate.numerator},
                                     {"denominator", rate.denominator},
                                     {"rate", rate.rate},
                                     {"std_error", rate.std_error}};
  }
  json deltas = json::object();
  for (const auto& [key, delta] : outcome.per_condition_delta) {
    deltas[to_string(key)] = {{"delta", delta.delta},
                              {"paired_std_error", delta.paired_std_error}};
  }
  json conditions = json::array();
  for (PrefixKey key : outcome.conditions) conditions.push_back(to_string(key));
  const json obj = {
      {"profile_name", outcome.profile_name},
      {"n", outcome.n},
      {"dropped", outcome.dropped},
      {"conditions", conditions},
      {"per_condition", per_condition},
      {"per_condition_delta", deltas},
  };
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << obj.dump(2) << "\n";
}

InterventionOutcome read_intervention_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  json obj;
  in >> obj;
  InterventionOutcome outcome;
  outcome.profile_name = obj.at("profile_name").get<std::string>();
  outcome.n = obj.at("n").get<std::size_t>();
  outcome.dropped = obj.at("dropped").get<std::size_t>();
  for (const auto& c : obj.at("conditions"))
    outcome.conditions.push_back(prefix_key_from_string(c.get<std::string>()));
  for (const auto& [name, rate] : obj.at("per_condition").items()) {
    RateEstimate estimate;
    estimate.numerator = rate.at("numerator").get<std::size_t>();
    estimate.denominator = rate.at("denominator").get<std::size_t>();
    estimate.rate = rate.at("rate").get<double>();
    estimate.std_error = rate.at("std_error").get<double>();
    outcome.per_condition[prefix_key_from_string(name)] = estimate;
  }
  for (const auto& [name, delta] : obj.at("per_condition_delta").items()) {
    outcome.per_condition_delta[prefix_key_from_string(name)] = {
        delta.at("delta").get<double>(), delta.at("paired_std_error").get<double>()};
  }
  return outcome;
}

void write_intervention_csv(const std::string& path, const InterventionOutcome& outcome) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << "condition,numerator,denominator,fpr,fpr_se,delta,delta_se\n";
  for (PrefixKey key : kCanonicalOrder) {
    const auto it = outcome.per_condition.find(key);
    if (it == outcome.per_condition.end()) continue;
    const RateEstimate& rate = it->second;
    double delta = 0.0, delta_se = 0.0;
    if (const auto dit = outcome.per_condition_delta.find(key);
        dit != outcome.per_condition_delta.end()) {
      delta = dit->second.delta;
      delta_se = dit->second.paired_std_error;
    }
    out << to_string(key) << "," << rate.numerator << "," << rate.denominator << ","
        << format_full(rate.rate) << "," << format_full(rate.std_error) << ","
        << format_full(delta) << "," << format_full(delta_se) << "\n";
  }
}

InterventionOutcome read_intervention_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  InterventionOutcome outcome;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 7) throw std::runtime_error(path + ": malformed CSV row: " + line);
    const PrefixKey key = prefix_key_from_string(fields[0]);
    RateEstimate rate;
    rate.numerator = std::stoull(fields[1]);
    rate.denominator = std::stoull(fields[2]);
    rate.rate = std::stod(fields[3]);
    rate.std_error = std::stod(fields[4]);
    outcome.conditions.push_back(key);
    outcome.per_condition[key] = rate;
    if (key != PrefixKey::neu)
      outcome.per_condition_delta[key] = {std::stod(fields[5]), std::stod(fields[6])};
    outcome.n = rate.denominator;
  }
  return outcome;
}

}  // namespace modaudit
