#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "modaudit/corpus.hpp"
#include "modaudit/gateway.hpp"
#include "modaudit/intervention.hpp"
#include "modaudit/judge.hpp"
#include "modaudit/providers.hpp"
#include "modaudit/topics.hpp"

namespace modaudit {

enum class Phase { judge, partition, collect, scenarios, gaps, index, contrast, intervene, report };

const char* to_string(Phase phase);
Phase phase_from_string(const std::string& s);
const std::vector<Phase>& all_phases();

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PipelineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitPhaseFailure = 2;
inline constexpr int kExitPartial = 3;

struct ProfileConfig {
  ModelProfile profile;
  std::string mock_script;  // mock provider script, optional
  HttpEndpoint endpoint;    // http providers
};

struct InterventionConfig {
  std::size_t n = 5000;
  std::uint64_t seed = 17;
  std::vector<PrefixKey> conditions = {PrefixKey::pol, PrefixKey::wok, PrefixKey::dem,
                                       PrefixKey::rep, PrefixKey::neu};
};

struct RunConfig {
  std::string corpus_path;
  CorpusFormat corpus_format = CorpusFormat::jsonl;
  std::string template_dir;
  std::string topic_catalog_path;  // empty selects the built-in catalog
  std::string cache_dir;
  std::string run_base_dir;

  std::map<std::string, ProfileConfig> profiles;
  std::string target_profile;
  std::string judge_profile;
  std::string embedder_profile;

  std::vector<JudgeMode> modes = {JudgeMode::binary, JudgeMode::rating};
  int rating_threshold = 4;
  RatingComparison comparison = RatingComparison::greater_equal;
  std::size_t max_chunks = 10;
  std::size_t fp_max_size = 5000;
  std::size_t tn_size = 5000;
  std::uint64_t seed = 0;
  std::size_t max_in_flight = 8;
  TopicEmbeddingMode topic_embedding = TopicEmbeddingMode::keywords_joined;
  InterventionConfig intervention;
  double max_unparseable_fraction = 0.05;
};

/// Reads a JSON config file; relative paths resolve against the file's
/// directory. Throws ConfigError on any problem.
RunConfig load_run_config(const std::string& path);

/// Checks referenced paths, profiles, and ranges. Throws ConfigError.
void validate(const RunConfig& config);

/// Hash over the semantic configuration. Output locations (cache_dir,
/// run_base_dir) are excluded so reruns land in the same run directory and
/// reports stay byte-identical across output roots.
std::string config_hash(const RunConfig& config);

/// Builds the gateway with one provider instance per configured profile.
/// The mock providers are returned so tests can read their counters.
struct GatewaySetup {
  std::shared_ptr<Gateway> gateway;
  std::map<std::string, std::shared_ptr<MockProvider>> mocks;
};
GatewaySetup build_gateway(const RunConfig& config);

struct RunStats {
  GatewayStats gateway;
  std::size_t parse_failures = 0;
};

struct PipelineResult {
  std::filesystem::path run_dir;
  int exit_code = kExitOk;
  RunStats stats;
};

/// Runs the requested phases in canonical order. Each phase reads its
/// predecessors' files and writes its own; completed phases are skipped
/// unless force is set. Missing prerequisites raise PipelineError.
PipelineResult run_pipeline(const RunConfig& config, const std::set<Phase>& phases,
                            bool force = false);

}  // namespace modaudit
