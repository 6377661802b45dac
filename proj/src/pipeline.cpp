#include "modaudit/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace modaudit {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::judge: return "judge";
    case Phase::partition: return "partition";
    case Phase::collect: return "collect";
    case Phase::scenarios: return "scenarios";
    case Phase::gaps: return "gaps";
    case Phase::index: return "index";
    case Phase::contrast: return "contrast";
    case Phase::intervene: return "intervene";
    case Phase::report: return "report";
  }
  return "unknown";
}

Phase phase_from_string(const std::string& s) {
  for (Phase phase : all_phases())
    if (s == to_string(phase)) return phase;
  throw ConfigError("unknown phase: " + s);
}

const std::vector<Phase>& all_phases() {
  static const std::vector<Phase> phases = {
      Phase::judge,  Phase::partition, Phase::collect,   Phase::scenarios, Phase::gaps,
      Phase::index,  Phase::contrast,  Phase::intervene, Phase::report};
  return phases;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string resolve_path(const fs::path& base, const std::string& path) {
  if (path.empty()) return path;
  fs::path p(path);
  return p.is_absolute() ? p.string() : (base / p).lexically_normal().string();
}

RatingComparison comparison_from_string(const std::string& s) {
  if (s == ">=") return RatingComparison::greater_equal;
  if (s == ">") return RatingComparison::strictly_greater;
  throw ConfigError("rating_comparison must be \">=\" or \">\"");
}

const char* to_string(RatingComparison comparison) {
  return comparison == RatingComparison::greater_equal ? ">=" : ">";
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json obj;
  try {
    in >> obj;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }

  const fs::path base = fs::path(path).parent_path();
  RunConfig config;
  try {
    config.corpus_path = resolve_path(base, obj.at("corpus").get<std::string>());
    const std::string format = obj.value("corpus_format", "jsonl");
    if (format == "jsonl") {
      config.corpus_format = CorpusFormat::jsonl;
    } else if (format == "csv") {
      config.corpus_format = CorpusFormat::csv;
    } else {
      throw ConfigError("corpus_format must be jsonl or csv");
    }
    config.template_dir = resolve_path(base, obj.at("template_dir").get<std::string>());
    config.topic_catalog_path = resolve_path(base, obj.value("topic_catalog", ""));
    config.cache_dir = resolve_path(base, obj.value("cache_dir", "out/cache"));
    config.run_base_dir = resolve_path(base, obj.value("run_base_dir", "out/runs"));

    for (const auto& [name, p] : obj.at("profiles").items()) {
      ProfileConfig profile_config;
      profile_config.profile.name = p.value("name", name);
      profile_config.profile.provider = provider_kind_from_string(p.at("provider").get<std::string>());
      profile_config.profile.temperature =
          p.contains("temperature") ? p.at("temperature").get<double>()
                                    : default_temperature(profile_config.profile.name);
      profile_config.profile.max_output_tokens = p.value("max_output_tokens", 256);
      profile_config.mock_script = resolve_path(base, p.value("mock_script", ""));
      profile_config.endpoint.base_url = p.value("base_url", "");
      profile_config.endpoint.api_key_env = p.value("api_key_env", "");
      profile_config.endpoint.timeout_seconds = p.value("timeout_seconds", 120);
      config.profiles.emplace(name, std::move(profile_config));
    }
    config.target_profile = obj.at("target_profile").get<std::string>();
    config.judge_profile = obj.value("judge_profile", config.target_profile);
    config.embedder_profile = obj.at("embedder_profile").get<std::string>();

    if (obj.contains("modes")) {
      config.modes.clear();
      for (const auto& m : obj.at("modes"))
        config.modes.push_back(judge_mode_from_string(m.get<std::string>()));
    }
    config.rating_threshold = obj.value("rating_threshold", 4);
    config.comparison = comparison_from_string(obj.value("rating_comparison", ">="));
    config.max_chunks = obj.value("max_chunks", std::size_t{10});
    config.fp_max_size = obj.value("fp_max_size", std::size_t{5000});
    config.tn_size = obj.value("tn_size", std::size_t{5000});
    config.seed = obj.value("seed", std::uint64_t{0});
    config.max_in_flight = obj.value("max_in_flight", std::size_t{8});
    config.topic_embedding =
        embedding_mode_from_string(obj.value("topic_embedding", "keywords_joined"));
    if (obj.contains("intervention")) {
      const auto& iv = obj.at("intervention");
      config.intervention.n = iv.value("n", std::size_t{5000});
      config.intervention.seed = iv.value("seed", std::uint64_t{17});
      if (iv.contains("conditions")) {
        config.intervention.conditions.clear();
        for (const auto& c : iv.at("conditions"))
          config.intervention.conditions.push_back(prefix_key_from_string(c.get<std::string>()));
      }
    }
    config.max_unparseable_fraction = obj.value("max_unparseable_fraction", 0.05);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  validate(config);
  return config;
}

void validate(const RunConfig& config) {
  if (!fs::exists(config.corpus_path))
    throw ConfigError("corpus file does not exist: " + config.corpus_path);
  if (!fs::is_directory(config.template_dir))
    throw ConfigError("template_dir does not exist: " + config.template_dir);
  if (!config.topic_catalog_path.empty() && !fs::exists(config.topic_catalog_path))
    throw ConfigError("topic catalog does not exist: " + config.topic_catalog_path);
  if (config.profiles.empty()) throw ConfigError("no model profiles configured");
  for (const std::string& name :
       {config.target_profile, config.judge_profile, config.embedder_profile}) {
    if (!config.profiles.contains(name)) throw ConfigError("unknown profile: " + name);
  }
  for (const auto& [name, profile_config] : config.profiles) {
    if (profile_config.profile.temperature < 0.0 || profile_config.profile.temperature > 2.0)
      throw ConfigError("profile '" + name + "': temperature outside [0,2]");
    if (profile_config.profile.max_output_tokens < 1)
      throw ConfigError("profile '" + name + "': max_output_tokens must be positive");
    if (!profile_config.mock_script.empty() && !fs::exists(profile_config.mock_script))
      throw ConfigError("profile '" + name + "': mock script does not exist: " +
                        profile_config.mock_script);
    if (profile_config.profile.provider != ProviderKind::mock &&
        profile_config.endpoint.base_url.empty())
      throw ConfigError("profile '" + name + "': http provider needs a base_url");
  }
  if (config.modes.empty()) throw ConfigError("modes must not be empty");
  if (config.rating_threshold < 1 || config.rating_threshold > 5)
    throw ConfigError("rating_threshold must be in [1,5]");
  if (config.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (config.max_unparseable_fraction < 0.0 || config.max_unparseable_fraction > 1.0)
    throw ConfigError("max_unparseable_fraction must be in [0,1]");
  bool has_neu = false;
  for (PrefixKey key : config.intervention.conditions) has_neu |= key == PrefixKey::neu;
  if (!has_neu) throw ConfigError("intervention.conditions must include neu");
}

namespace {

json semantic_config_json(const RunConfig& config) {
  json profiles = json::object();
  for (const auto& [name, p] : config.profiles) {
    profiles[name] = {
        {"name", p.profile.name},
        {"provider", to_string(p.profile.provider)},
        {"temperature", p.profile.temperature},
        {"max_output_tokens", p.profile.max_output_tokens},
    };
  }
  json modes = json::array();
  for (JudgeMode mode : config.modes) modes.push_back(to_string(mode));
  json conditions = json::array();
  for (PrefixKey key : config.intervention.conditions) conditions.push_back(to_string(key));
  // cache_dir and run_base_dir are output locations, deliberately excluded.
  return json{
      {"corpus", config.corpus_path},
      {"corpus_format", config.corpus_format == CorpusFormat::jsonl ? "jsonl" : "csv"},
      {"template_dir", config.template_dir},
      {"topic_catalog", config.topic_catalog_path},
      {"profiles", profiles},
      {"target_profile", config.target_profile},
      {"judge_profile", config.judge_profile},
      {"embedder_profile", config.embedder_profile},
      {"modes", modes},
      {"rating_threshold", config.rating_threshold},
      {"rating_comparison", to_string(config.comparison)},
      {"max_chunks", config.max_chunks},
      {"fp_max_size", config.fp_max_size},
      {"tn_size", config.tn_size},
      {"seed", config.seed},
      {"topic_embedding", to_string(config.topic_embedding)},
      {"intervention",
       {{"n", config.intervention.n},
        {"seed", config.intervention.seed},
        {"conditions", conditions}}},
      {"max_unparseable_fraction", config.max_unparseable_fraction},
  };
}

}  // namespace

std::string config_hash(const RunConfig& config) {
  return sha256_hex(semantic_config_json(config).dump());
}

GatewaySetup build_gateway(const RunConfig& config) {
  GatewaySetup setup;
  auto cache = std::make_shared<DiskCache>(config.cache_dir);
  setup.gateway = std::make_shared<Gateway>(cache);
  for (const auto& [name, profile_config] : config.profiles) {
    std::shared_ptr<Provider> provider;
    switch (profile_config.profile.provider) {
      case ProviderKind::mock: {
        auto mock = profile_config.mock_script.empty()
                        ? std::make_shared<MockProvider>()
                        : MockProvider::from_script(profile_config.mock_script);
        setup.mocks.emplace(name, mock);
        provider = mock;
        break;
      }
      case ProviderKind::openai_compatible:
        provider = std::make_shared<OpenAiProvider>(profile_config.endpoint);
        break;
      case ProviderKind::anthropic_compatible:
        provider = std::make_shared<AnthropicProvider>(profile_config.endpoint);
        break;
    }
    setup.gateway->register_provider(profile_config.profile.name, provider);
  }
  return setup;
}

// ---------------------------------------------------------------------------
// Run context and phases

namespace {

constexpr const char* kJudgeMetaFile = "judge_meta.json";
constexpr const char* kAnnotatedFile = "corpus_annotated.jsonl";
constexpr const char* kPartitionFile = "partition.json";
constexpr const char* kFpManifestFile = "false_positives.jsonl";
constexpr const char* kTnManifestFile = "true_negatives.jsonl";
constexpr const char* kCollectMetaFile = "collect_meta.json";
constexpr const char* kScenarioFpFile = "scenarios_fp.jsonl";
constexpr const char* kScenarioTnFile = "scenarios_tn.jsonl";
constexpr const char* kScenarioMetaFile = "scenarios_meta.json";
constexpr const char* kGapsFile = "gaps.jsonl";
constexpr const char* kIndicesFile = "indices.json";
constexpr const char* kAmplificationFile = "amplification.json";
constexpr const char* kInterventionJsonFile = "intervention.json";
constexpr const char* kInterventionCsvFile = "intervention.csv";
constexpr const char* kInterventionMetaFile = "intervene_meta.json";
constexpr const char* kReportJsonFile = "report.json";
constexpr const char* kReportMdFile = "report.md";
constexpr const char* kFprCsvFile = "fpr.csv";
constexpr const char* kAmplificationCsvFile = "amplification.csv";

std::string judgments_file(JudgeMode mode) {
  return std::string("judgments_") + to_string(mode) + ".jsonl";
}

std::string sanitize_filename(std::string_view name) {
  std::string out;
  for (char c : name)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PipelineError("cannot write: " + path.string());
  out << text;
}

void write_json_file(const fs::path& path, const json& obj) {
  write_text(path, obj.dump(2) + "\n");
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PipelineError("cannot open: " + path.string());
  json obj;
  try {
    in >> obj;
  } catch (const json::exception& e) {
    throw PipelineError(path.string() + ": invalid JSON: " + e.what());
  }
  return obj;
}

std::size_t count_lines(const fs::path& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

struct GapRow {
  std::string topic;
  TopicCatalogKind catalog;
  Cohort cohort;
  std::string comment_id;
  double gap;
};

class Run {
 public:
  Run(const RunConfig& config, bool force)
      : config_(config), force_(force) {
    dir_ = fs::path(config.run_base_dir) / config_hash(config).substr(0, 12);
    fs::create_directories(dir_);
    fs::create_directories(dir_ / "failures");
    fs::create_directories(dir_ / "curves");
    write_json_file(dir_ / "run_config.json",
                    json{{"config", semantic_config_json(config)},
                         {"config_hash", config_hash(config)}});
  }

  const fs::path& dir() const { return dir_; }

  void execute(Phase phase) {
    switch (phase) {
      case Phase::judge: return phase_judge();
      case Phase::partition: return phase_partition();
      case Phase::collect: return phase_collect();
      case Phase::scenarios: return phase_scenarios();
      case Phase::gaps: return phase_gaps();
      case Phase::index: return phase_index();
      case Phase::contrast: return phase_contrast();
      case Phase::intervene: return phase_intervene();
      case Phase::report: return phase_report();
    }
  }

  PipelineResult finish() {
    PipelineResult result;
    result.run_dir = dir_;
    if (gateway_setup_.gateway) result.stats.gateway = gateway_setup_.gateway->stats();
    result.exit_code = kExitOk;
    for (const char* meta_file :
         {kJudgeMetaFile, kPartitionFile, kCollectMetaFile, kScenarioMetaFile,
          kInterventionMetaFile}) {
      const fs::path path = dir_ / meta_file;
      if (!fs::exists(path)) continue;
      const json meta = read_json_file(path);
      if (!meta.contains("parse_stats")) continue;
      for (const auto& [name, stats] : meta.at("parse_stats").items()) {
        const auto attempted = stats.value("attempted", std::size_t{0});
        const auto failures = stats.value("failures", std::size_t{0});
        result.stats.parse_failures += failures;
        if (attempted > 0 &&
            static_cast<double>(failures) / static_cast<double>(attempted) >
                config_.max_unparseable_fraction) {
          result.exit_code = kExitPartial;
        }
      }
    }
    return result;
  }

 private:
  // Lazy shared state --------------------------------------------------------

  Gateway& gateway() {
    if (!gateway_setup_.gateway) gateway_setup_ = build_gateway(config_);
    return *gateway_setup_.gateway;
  }

  const std::vector<LabeledComment>& corpus() {
    if (!corpus_loaded_) {
      corpus_ = load_corpus(config_.corpus_path, config_.corpus_format);
      corpus_loaded_ = true;
    }
    return corpus_;
  }

  std::vector<LabeledComment> benign() {
    std::vector<LabeledComment> out;
    for (const auto& comment : corpus())
      if (comment.gold_label == GoldLabel::benign) out.push_back(comment);
    return out;
  }

  const PromptTemplate& tmpl(TemplateName name) {
    auto it = templates_.find(name);
    if (it == templates_.end())
      it = templates_.emplace(name, load_template(config_.template_dir, name)).first;
    return it->second;
  }

  const TopicCatalog& catalog() {
    if (!catalog_loaded_) {
      catalog_ = config_.topic_catalog_path.empty() ? default_topic_catalog()
                                                    : load_topic_catalog(config_.topic_catalog_path);
      catalog_loaded_ = true;
    }
    return catalog_;
  }

  const ModelProfile& profile(const std::string& name) const {
    return config_.profiles.at(name).profile;
  }

  bool done(const std::vector<std::string>& outputs) const {
    if (force_) return false;
    for (const auto& name : outputs)
      if (!fs::exists(dir_ / name)) return false;
    return true;
  }

  void require(const std::vector<std::string>& inputs, const char* needed_phase) const {
    for (const auto& name : inputs) {
      if (!fs::exists(dir_ / name))
        throw PipelineError(std::string("missing prerequisite artifact '") + name +
                            "'; run the " + needed_phase + " phase first");
    }
  }

  ParseFailureLog fresh_failure_log(const std::string& name) {
    const fs::path path = dir_ / "failures" / (name + ".jsonl");
    fs::remove(path);
    return ParseFailureLog(path.string());
  }

  // Phases --------------------------------------------------------------------

  void phase_judge() {
    std::vector<std::string> outputs = {kJudgeMetaFile};
    for (JudgeMode mode : config_.modes) outputs.push_back(judgments_file(mode));
    if (!force_) {
      bool all = true;
      for (const auto& name : outputs) all &= fs::exists(dir_ / name);
      if (all) return;
    }

    const auto cohort = benign();
    if (cohort.empty()) throw PipelineError("corpus has no benign comments to judge");
    json parse_stats = json::object();
    for (JudgeMode mode : config_.modes) {
      auto log = fresh_failure_log(std::string("judge_") + to_string(mode));
      JudgeOptions options;
      options.mode = mode;
      options.threshold = config_.rating_threshold;
      options.comparison = config_.comparison;
      options.max_in_flight = config_.max_in_flight;
      const auto& prompt = tmpl(mode == JudgeMode::binary ? TemplateName::binary_moderation
                                                          : TemplateName::rating_moderation);
      const auto records =
          judge_cohort(cohort, gateway(), prompt, profile(config_.target_profile), options, &log);
      write_judgments((dir_ / judgments_file(mode)).string(), records);
      parse_stats[std::string("judge_") + to_string(mode)] = {
          {"attempted", cohort.size()}, {"records", records.size()}, {"failures", log.count()}};
    }
    write_json_file(dir_ / kJudgeMetaFile,
                    json{{"benign_count", cohort.size()}, {"parse_stats", parse_stats}});
  }

  void phase_partition() {
    if (done({kAnnotatedFile, kPartitionFile})) return;
    std::vector<std::string> needed;
    for (JudgeMode mode : config_.modes) needed.push_back(judgments_file(mode));
    require(needed, "judge");

    const auto cohort = benign();
    auto log = fresh_failure_log("offensive_terms");
    const auto annotated =
        annotate_offensive_terms(cohort, gateway(), tmpl(TemplateName::offensive_term_judge),
                                 profile(config_.judge_profile), config_.max_in_flight, &log);
    write_annotated_corpus((dir_ / kAnnotatedFile).string(), annotated);

    std::size_t with_terms = 0;
    std::unordered_map<std::string_view, bool> has_terms;
    for (const auto& comment : annotated) {
      const bool ot = !comment.offensive_terms->empty();
      with_terms += ot ? 1 : 0;
      has_terms.emplace(comment.id, ot);
    }

    json fpr = json::object();
    json decomposition = json::object();
    for (JudgeMode mode : config_.modes) {
      const auto records = read_judgments((dir_ / judgments_file(mode)).string());
      std::size_t flagged_with = 0, flagged_without = 0, judged_with = 0, judged_without = 0;
      for (const auto& record : records) {
        const auto it = has_terms.find(record.comment_id);
        if (it == has_terms.end()) continue;  // annotation failed for this id
        if (it->second) {
          ++judged_with;
          flagged_with += record.verdict.flagged ? 1 : 0;
        } else {
          ++judged_without;
          flagged_without += record.verdict.flagged ? 1 : 0;
        }
      }
      const auto rate_json = [](std::size_t num, std::size_t den) -> json {
        if (den == 0) return json{{"numerator", num}, {"denominator", den}};
        const RateEstimate est = rate_from_counts(num, den);
        return json{{"numerator", est.numerator},
                    {"denominator", est.denominator},
                    {"rate", est.rate},
                    {"std_error", est.std_error}};
      };
      fpr[to_string(mode)] = {
          {"with_offensive_terms", rate_json(flagged_with, judged_with)},
          {"without_offensive_terms", rate_json(flagged_without, judged_without)},
      };
      decomposition[to_string(mode)] = {{"with_offensive_terms", flagged_with},
                                        {"without_offensive_terms", flagged_without},
                                        {"total", flagged_with + flagged_without}};
    }

    write_json_file(
        dir_ / kPartitionFile,
        json{{"groups",
              {{"with_offensive_terms", with_terms},
               {"without_offensive_terms", annotated.size() - with_terms}}},
             {"fpr", fpr},
             {"false_positive_decomposition", decomposition},
             {"parse_stats",
              {{"offensive_terms",
                {{"attempted", cohort.size()},
                 {"records", annotated.size()},
                 {"failures", log.count()}}}}}});
  }

  void phase_collect() {
    if (done({kFpManifestFile, kTnManifestFile, kCollectMetaFile})) return;
    require({kAnnotatedFile}, "partition");
    require({judgments_file(JudgeMode::binary)}, "judge");

    const auto annotated = load_corpus((dir_ / kAnnotatedFile).string(), CorpusFormat::jsonl);
    CohortFilter filter;
    filter.require_benign = true;
    filter.require_no_offensive_terms = true;
    filter.max_chunks = config_.max_chunks;
    filter.max_size = config_.fp_max_size;
    filter.seed = config_.seed;

    auto log = fresh_failure_log("collect");
    const auto fp = collect_false_positives(annotated, gateway(),
                                            tmpl(TemplateName::binary_moderation),
                                            profile(config_.target_profile), filter,
                                            JudgeOptions{JudgeMode::binary, config_.rating_threshold,
                                                         config_.comparison, config_.max_in_flight},
                                            &log);

    CohortFilter eligibility = filter;
    eligibility.max_size.reset();
    const auto eligible = filter_cohort(annotated, eligibility);
    std::vector<JudgmentRecord> records;
    if (!eligible.empty()) {
      records = judge_cohort(eligible, gateway(), tmpl(TemplateName::binary_moderation),
                             profile(config_.target_profile),
                             JudgeOptions{JudgeMode::binary, config_.rating_threshold,
                                          config_.comparison, config_.max_in_flight},
                             nullptr);
    }
    const std::uint64_t tn_seed = config_.seed + 1;
    const auto tn = sample_true_negatives(eligible, records, config_.tn_size, tn_seed);

    write_cohort_manifest((dir_ / kFpManifestFile).string(), fp, filter, eligible.size());
    CohortFilter tn_filter = eligibility;
    tn_filter.max_size = config_.tn_size;
    tn_filter.seed = tn_seed;
    write_cohort_manifest((dir_ / kTnManifestFile).string(), tn, tn_filter, eligible.size());
    write_json_file(dir_ / kCollectMetaFile,
                    json{{"eligible", eligible.size()},
                         {"false_positives", fp.size()},
                         {"true_negatives", tn.size()},
                         {"fp_seed", config_.seed},
                         {"tn_seed", tn_seed},
                         {"parse_stats",
                          {{"collect",
                            {{"attempted", eligible.size()}, {"failures", log.count()}}}}}});
  }

  void phase_scenarios() {
    if (done({kScenarioFpFile, kScenarioTnFile, kScenarioMetaFile})) return;
    require({kFpManifestFile, kTnManifestFile, kAnnotatedFile}, "collect");

    const auto annotated = load_corpus((dir_ / kAnnotatedFile).string(), CorpusFormat::jsonl);
    json parse_stats = json::object();
    const auto run_cohort = [&](const char* manifest_file, const char* output_file, Cohort cohort,
                                const char* log_name) {
      const auto manifest = read_cohort_manifest((dir_ / manifest_file).string());
      const auto comments = select_by_ids(annotated, manifest.ids);
      std::vector<ScenarioRecord> records;
      auto log = fresh_failure_log(log_name);
      if (!comments.empty()) {
        records = elicit_scenarios(comments, cohort, gateway(),
                                   tmpl(TemplateName::scenario_elicitation),
                                   profile(config_.target_profile), config_.max_in_flight, &log);
      }
      write_scenarios((dir_ / output_file).string(), records);
      parse_stats[log_name] = {{"attempted", comments.size()},
                               {"records", records.size()},
                               {"failures", log.count()}};
    };
    run_cohort(kFpManifestFile, kScenarioFpFile, Cohort::false_positive, "scenarios_fp");
    run_cohort(kTnManifestFile, kScenarioTnFile, Cohort::true_negative, "scenarios_tn");
    write_json_file(dir_ / kScenarioMetaFile, json{{"parse_stats", parse_stats}});
  }

  void phase_gaps() {
    if (done({kGapsFile})) return;
    require({kScenarioFpFile, kScenarioTnFile, kAnnotatedFile}, "scenarios");

    const auto annotated = load_corpus((dir_ / kAnnotatedFile).string(), CorpusFormat::jsonl);
    std::unordered_map<std::string_view, const LabeledComment*> by_id;
    for (const auto& comment : annotated) by_id.emplace(comment.id, &comment);

    std::ofstream out(dir_ / kGapsFile, std::ios::binary | std::ios::trunc);
    if (!out) throw PipelineError("cannot write gaps file");
    const auto& embedder = profile(config_.embedder_profile);
    for (const char* scenario_file : {kScenarioFpFile, kScenarioTnFile}) {
      const auto scenarios = read_scenarios((dir_ / scenario_file).string());
      for (const auto& topic : catalog().topics) {
        for (const auto& scenario : scenarios) {
          const auto it = by_id.find(scenario.comment_id);
          if (it == by_id.end())
            throw PipelineError("scenario references unknown comment id: " + scenario.comment_id);
          const double gap =
              relevance_gap(topic, scenario.scenario_text, it->second->text, gateway(), embedder,
                            config_.topic_embedding);
          out << json{{"topic", topic.label},
                      {"catalog", to_string(topic.catalog)},
                      {"cohort", to_string(scenario.cohort)},
                      {"comment_id", scenario.comment_id},
                      {"gap", gap}}
                     .dump()
              << "\n";
        }
      }
    }
  }

  std::vector<GapRow> read_gaps() {
    std::vector<GapRow> rows;
    std::ifstream in(dir_ / kGapsFile);
    if (!in) throw PipelineError("cannot open gaps file");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json obj = json::parse(line);
      rows.push_back({obj.at("topic").get<std::string>(),
                      catalog_kind_from_string(obj.at("catalog").get<std::string>()),
                      cohort_from_string(obj.at("cohort").get<std::string>()),
                      obj.at("comment_id").get<std::string>(), obj.at("gap").get<double>()});
    }
    return rows;
  }

  void phase_index() {
    if (done({kIndicesFile})) return;
    require({kGapsFile}, "gaps");

    const auto rows = read_gaps();
    const std::string& profile_name = profile(config_.target_profile).name;
    json results = json::array();
    json skipped = json::array();
    for (const auto& topic : catalog().topics) {
      for (Cohort cohort : {Cohort::false_positive, Cohort::true_negative}) {
        GapSampleSet sample;
        sample.topic_label = topic.label;
        sample.profile_name = profile_name;
        sample.cohort = cohort;
        for (const auto& row : rows) {
          if (row.topic == topic.label && row.catalog == topic.catalog && row.cohort == cohort)
            sample.gaps.push_back(row.gap);
        }
        const json id = {{"topic", topic.label},
                         {"catalog", to_string(topic.catalog)},
                         {"cohort", to_string(cohort)},
                         {"n", sample.gaps.size()}};
        if (sample.gaps.size() < 2) {
          json entry = id;
          entry["reason"] = "fewer than 2 gap samples";
          skipped.push_back(entry);
          continue;
        }
        DensityEstimate density;
        try {
          density = fit_density(std::move(sample));
        } catch (const std::invalid_argument& e) {
          json entry = id;
          entry["reason"] = e.what();
          skipped.push_back(entry);
          continue;
        }
        json entry = id;
        entry["bandwidth"] = density.bandwidth;
        entry["index"] = amplification_index(density);
        results.push_back(entry);

        const auto [min_it, max_it] =
            std::minmax_element(density.sample.gaps.begin(), density.sample.gaps.end());
        const auto grid = linspace(*min_it - 3.0 * density.bandwidth,
                                   *max_it + 3.0 * density.bandwidth, 257);
        const auto curve = density_curve(density, grid);
        std::ostringstream csv;
        csv << "g,f\n";
        char buf[64];
        for (const auto& [g, f] : curve) {
          std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", g, f);
          csv << buf;
        }
        write_text(dir_ / "curves" /
                       (sanitize_filename(topic.label) + "_" + to_string(topic.catalog) + "_" +
                        to_string(cohort) + ".csv"),
                   csv.str());
      }
    }
    write_json_file(dir_ / kIndicesFile, json{{"bandwidth_rule", "silverman"},
                                              {"results", results},
                                              {"skipped", skipped}});
  }

  void phase_contrast() {
    if (done({kAmplificationFile})) return;
    require({kIndicesFile}, "index");

    const json indices = read_json_file(dir_ / kIndicesFile);
    struct Cell {
      std::optional<double> index;
      std::size_t n = 0;
      double bandwidth = 0.0;
    };
    std::map<std::pair<std::string, std::string>, std::pair<Cell, Cell>> cells;
    for (const auto& entry : indices.at("results")) {
      const auto key = std::make_pair(entry.at("topic").get<std::string>(),
                                      entry.at("catalog").get<std::string>());
      Cell cell{entry.at("index").get<double>(), entry.at("n").get<std::size_t>(),
                entry.at("bandwidth").get<double>()};
      if (cohort_from_string(entry.at("cohort").get<std::string>()) == Cohort::false_positive)
        cells[key].first = cell;
      else
        cells[key].second = cell;
    }

    json results = json::array();
    for (const auto& topic : catalog().topics) {
      const auto it = cells.find({topic.label, to_string(topic.catalog)});
      if (it == cells.end()) continue;
      const auto& [fp, tn] = it->second;
      if (!fp.index) continue;  // no false-positive density, nothing to report
      json entry = {
          {"topic", topic.label},
          {"catalog", to_string(topic.catalog)},
          {"profile", profile(config_.target_profile).name},
          {"index_fp", *fp.index},
          {"n_fp", fp.n},
          {"bandwidth_fp", fp.bandwidth},
      };
      if (tn.index) {
        entry["index_tn"] = *tn.index;
        entry["n_tn"] = tn.n;
        entry["bandwidth_tn"] = tn.bandwidth;
        entry["contrast"] = amplification_contrast(*fp.index, *tn.index);
      }
      results.push_back(entry);
    }
    write_json_file(dir_ / kAmplificationFile,
                    json{{"metadata",
                          {{"bandwidth_rule", "silverman"},
                           {"topic_embedding", to_string(config_.topic_embedding)},
                           {"embedder", profile(config_.embedder_profile).name},
                           {"catalog_version", catalog().version}}},
                         {"results", results}});
  }

  void phase_intervene() {
    if (done({kInterventionJsonFile, kInterventionCsvFile, kInterventionMetaFile})) return;

    CohortFilter filter;
    filter.require_benign = true;
    filter.max_size = config_.intervention.n;
    filter.seed = config_.intervention.seed;
    const auto comments = filter_cohort(corpus(), filter);
    if (comments.empty()) throw PipelineError("no benign comments available for intervention");

    std::vector<PrefixCondition> conditions;
    for (PrefixKey key : config_.intervention.conditions)
      conditions.push_back(prefix_condition(key));

    auto log = fresh_failure_log("intervention");
    const auto outcome = run_intervention(comments, conditions, gateway(),
                                          tmpl(TemplateName::rating_moderation),
                                          profile(config_.target_profile),
                                          config_.rating_threshold, config_.comparison,
                                          config_.max_in_flight, &log);
    write_intervention_json((dir_ / kInterventionJsonFile).string(), outcome);
    write_intervention_csv((dir_ / kInterventionCsvFile).string(), outcome);
    write_json_file(dir_ / kInterventionMetaFile,
                    json{{"sampled", comments.size()},
                         {"dropped", outcome.dropped},
                         {"seed", config_.intervention.seed},
                         {"parse_stats",
                          {{"intervention",
                            {{"attempted", comments.size() * conditions.size()},
                             {"failures", log.count()}}}}}});
  }

  void phase_report() {
    if (done({kReportJsonFile, kReportMdFile, kFprCsvFile, kAmplificationCsvFile})) return;
    require({kPartitionFile}, "partition");
    require({kCollectMetaFile, kFpManifestFile, kTnManifestFile}, "collect");
    require({kAmplificationFile}, "contrast");
    require({kInterventionJsonFile}, "intervene");

    const json partition = read_json_file(dir_ / kPartitionFile);
    const json collect_meta = read_json_file(dir_ / kCollectMetaFile);
    const json amplification = read_json_file(dir_ / kAmplificationFile);
    const json intervention = read_json_file(dir_ / kInterventionJsonFile);
    const auto outcome = read_intervention_json((dir_ / kInterventionJsonFile).string());

    json template_versions = json::object();
    for (TemplateName name :
         {TemplateName::binary_moderation, TemplateName::rating_moderation,
          TemplateName::offensive_term_judge, TemplateName::scenario_elicitation,
          TemplateName::topic_summarization}) {
      template_versions[to_string(name)] = tmpl(name).version;
    }

    json parse_failures = json::object();
    if (fs::exists(dir_ / "failures")) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(dir_ / "failures"))
        files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      for (const auto& file : files)
        parse_failures[file.stem().string()] = count_lines(file);
    }

    const json metadata = {
        {"config_hash", config_hash(config_)},
        {"seed", config_.seed},
        {"intervention_seed", config_.intervention.seed},
        {"rating_threshold", config_.rating_threshold},
        {"rating_comparison", to_string(config_.comparison)},
        {"max_chunks", config_.max_chunks},
        {"templates", template_versions},
        {"topic_catalog_version", catalog().version},
        {"topic_embedding", to_string(config_.topic_embedding)},
        {"profiles",
         {{"target", profile(config_.target_profile).name},
          {"judge", profile(config_.judge_profile).name},
          {"embedder", profile(config_.embedder_profile).name}}},
    };

    json intervention_table = json::array();
    for (const auto& row : report_intervention(outcome)) intervention_table.push_back(row);

    const json report = {
        {"metadata", metadata},
        {"fpr", partition},
        {"cohorts",
         {{"eligible", collect_meta.at("eligible")},
          {"false_positives", collect_meta.at("false_positives")},
          {"true_negatives", collect_meta.at("true_negatives")}}},
        {"amplification", amplification},
        {"intervention", intervention},
        {"intervention_table", intervention_table},
        {"parse_failures", parse_failures},
        {"sources",
         {{"judgments_binary", judgments_file(JudgeMode::binary)},
          {"annotated_corpus", kAnnotatedFile},
          {"false_positives", kFpManifestFile},
          {"true_negatives", kTnManifestFile},
          {"scenarios_fp", kScenarioFpFile},
          {"scenarios_tn", kScenarioTnFile},
          {"gaps", kGapsFile},
          {"indices", kIndicesFile},
          {"amplification", kAmplificationFile},
          {"intervention", kInterventionJsonFile}}},
    };
    write_json_file(dir_ / kReportJsonFile, report);
    write_text(dir_ / kReportMdFile, render_markdown(report));
    write_text(dir_ / kFprCsvFile, render_fpr_csv(partition));
    write_text(dir_ / kAmplificationCsvFile, render_amplification_csv(amplification));
  }

  // Report rendering ----------------------------------------------------------

  static std::string fmt(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", value);
    return buf;
  }

  std::string render_fpr_csv(const json& partition) const {
    std::ostringstream out;
    out << "mode,group,numerator,denominator,rate,std_error\n";
    for (const auto& [mode, groups] : partition.at("fpr").items()) {
      for (const auto& [group, cell] : groups.items()) {
        out << mode << "," << group << "," << cell.at("numerator").get<std::size_t>() << ","
            << cell.at("denominator").get<std::size_t>();
        if (cell.contains("rate")) {
          char buf[64];
          std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", cell.at("rate").get<double>(),
                        cell.at("std_error").get<double>());
          out << buf;
        } else {
          out << ",,";
        }
        out << "\n";
      }
    }
    return out.str();
  }

  std::string render_amplification_csv(const json& amplification) const {
    std::ostringstream out;
    out << "topic,profile,cohort,index,contrast\n";
    char buf[64];
    for (const auto& entry : amplification.at("results")) {
      const std::string topic = entry.at("topic").get<std::string>();
      const std::string profile_name = entry.at("profile").get<std::string>();
      const std::string contrast = [&]() -> std::string {
        if (!entry.contains("contrast")) return "";
        std::snprintf(buf, sizeof(buf), "%.17g", entry.at("contrast").get<double>());
        return buf;
      }();
      std::snprintf(buf, sizeof(buf), "%.17g", entry.at("index_fp").get<double>());
      out << topic << "," << profile_name << ",false_positive," << buf << "," << contrast << "\n";
      if (entry.contains("index_tn")) {
        std::snprintf(buf, sizeof(buf), "%.17g", entry.at("index_tn").get<double>());
        out << topic << "," << profile_name << ",true_negative," << buf << "," << contrast
            << "\n";
      }
    }
    return out.str();
  }

  std::string render_markdown(const json& report) const {
    std::ostringstream md;
    const json& meta = report.at("metadata");
    md << "# Moderation over-sensitivity audit\n\n";
    md << "- config hash: `" << meta.at("config_hash").get<std::string>() << "`\n";
    md << "- target profile: " << meta.at("profiles").at("target").get<std::string>() << "\n";
    md << "- judge profile: " << meta.at("profiles").at("judge").get<std::string>() << "\n";
    md << "- embedder: " << meta.at("profiles").at("embedder").get<std::string>() << "\n";
    md << "- seed: " << meta.at("seed").get<std::uint64_t>()
       << ", intervention seed: " << meta.at("intervention_seed").get<std::uint64_t>() << "\n";
    md << "- rating threshold: " << meta.at("rating_threshold").get<int>() << " (flag when rating "
       << meta.at("rating_comparison").get<std::string>() << " threshold)\n";
    md << "- template versions:";
    for (const auto& [name, version] : meta.at("templates").items())
      md << " " << name << "=" << version.get<std::string>();
    md << "\n- topic catalog: " << meta.at("topic_catalog_version").get<std::string>() << " ("
       << meta.at("topic_embedding").get<std::string>() << ")\n\n";

    md << "## False positive rates\n\n";
    md << "| mode | group | flagged | judged | FPR | SE |\n";
    md << "|---|---|---|---|---|---|\n";
    for (const auto& [mode, groups] : report.at("fpr").at("fpr").items()) {
      for (const auto& [group, cell] : groups.items()) {
        md << "| " << mode << " | " << group << " | " << cell.at("numerator").get<std::size_t>()
           << " | " << cell.at("denominator").get<std::size_t>() << " | ";
        if (cell.contains("rate"))
          md << fmt(cell.at("rate").get<double>()) << " | " << fmt(cell.at("std_error").get<double>());
        else
          md << "- | -";
        md << " |\n";
      }
    }

    md << "\n## Cohorts\n\n";
    md << "- eligible (benign, no offensive terms, short): "
       << report.at("cohorts").at("eligible").get<std::size_t>() << "\n";
    md << "- false positives: " << report.at("cohorts").at("false_positives").get<std::size_t>()
       << "\n";
    md << "- true negatives: " << report.at("cohorts").at("true_negatives").get<std::size_t>()
       << "\n";

    md << "\n## Topic amplification\n\n";
    md << "| topic | catalog | I(fp) | I(tn) | contrast |\n";
    md << "|---|---|---|---|---|\n";
    for (const auto& entry : report.at("amplification").at("results")) {
      md << "| " << entry.at("topic").get<std::string>() << " | "
         << entry.at("catalog").get<std::string>() << " | "
         << fmt(entry.at("index_fp").get<double>()) << " | ";
      md << (entry.contains("index_tn") ? fmt(entry.at("index_tn").get<double>()) : "-") << " | ";
      md << (entry.contains("contrast") ? fmt(entry.at("contrast").get<double>()) : "-") << " |\n";
    }

    md << "\n## Prefix intervention\n\n";
    md << "```\n";
    for (const auto& row : report.at("intervention_table")) md << row.get<std::string>() << "\n";
    md << "```\n";

    md << "\n## Parser failures\n\n";
    if (report.at("parse_failures").empty()) {
      md << "none\n";
    } else {
      for (const auto& [name, count] : report.at("parse_failures").items())
        md << "- " << name << ": " << count.get<std::size_t>() << "\n";
    }
    return md.str();
  }

  const RunConfig& config_;
  bool force_;
  fs::path dir_;
  GatewaySetup gateway_setup_;
  std::vector<LabeledComment> corpus_;
  bool corpus_loaded_ = false;
  std::map<TemplateName, PromptTemplate> templates_;
  TopicCatalog catalog_;
  bool catalog_loaded_ = false;
};

}  // namespace

PipelineResult run_pipeline(const RunConfig& config, const std::set<Phase>& phases, bool force) {
  validate(config);
  Run run(config, force);
  for (Phase phase : all_phases()) {
    if (phases.contains(phase)) run.execute(phase);
  }
  return run.finish();
}

}  // namespace modaudit
