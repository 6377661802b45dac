#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace modaudit {

enum class GoldLabel { benign, toxic };

const char* to_string(GoldLabel label);

/// One comment from a toxicity dataset, normalized to the unified label set.
/// offensive_terms stays absent until an LLM judge has annotated the record.
struct LabeledComment {
  std::string id;
  std::string text;
  GoldLabel gold_label = GoldLabel::benign;
  std::optional<std::vector<std::string>> offensive_terms;
  std::string source;
};

enum class CorpusFormat { jsonl, csv };

struct CorpusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Maps dataset-specific label strings (lowercased) onto the unified labels.
using LabelAliases = std::unordered_map<std::string, GoldLabel>;

LabelAliases default_label_aliases();

/// Loads a corpus file. Every record must parse; a malformed record, an
/// unknown label, or a duplicate id raises CorpusError naming the line.
std::vector<LabeledComment> load_corpus(const std::string& path, CorpusFormat format,
                                        const LabelAliases& aliases = default_label_aliases());

/// Number of maximal nonempty runs between whitespace splits. Any Unicode
/// whitespace separates chunks, not just ASCII space.
std::size_t chunk_count(std::string_view text);

struct CohortFilter {
  bool require_benign = false;
  bool require_no_offensive_terms = false;
  std::optional<std::size_t> max_chunks;  // keep records with chunk_count < max_chunks
  std::optional<std::size_t> max_size;    // seeded uniform downsample when candidates exceed it
  std::uint64_t seed = 0;
};

/// Applies all predicates, then (if needed) a seeded uniform sample without
/// replacement of exactly max_size records. Output preserves corpus order and
/// is deterministic for a fixed seed.
std::vector<LabeledComment> filter_cohort(const std::vector<LabeledComment>& corpus,
                                          const CohortFilter& filter);

/// Sorted sample of sample_size distinct indices from [0, population),
/// uniform without replacement. Deterministic for a fixed seed on every
/// platform (does not use distribution objects from <random>).
std::vector<std::size_t> seeded_sample_indices(std::size_t population, std::size_t sample_size,
                                               std::uint64_t seed);

/// Cohort manifest: a metadata header object followed by one {"id": ...}
/// line per record.
void write_cohort_manifest(const std::string& path, const std::vector<LabeledComment>& cohort,
                           const CohortFilter& filter, std::size_t input_size);

struct CohortManifest {
  std::vector<std::string> ids;
  std::uint64_t seed = 0;
  std::size_t input_size = 0;
};

CohortManifest read_cohort_manifest(const std::string& path);

/// Reorders `corpus` records named by manifest ids; throws if an id is missing.
std::vector<LabeledComment> select_by_ids(const std::vector<LabeledComment>& corpus,
                                          const std::vector<std::string>& ids);

}  // namespace modaudit
