// Command-line front end for the moderation over-sensitivity audit pipeline.

#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "modaudit/pipeline.hpp"

namespace {

using namespace modaudit;

struct Overrides {
  std::optional<std::string> corpus;
  std::optional<std::string> profile;
  std::optional<std::string> mode;
  std::optional<int> threshold;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_in_flight;
  std::optional<std::size_t> intervention_n;
  std::vector<std::string> conditions;
  std::optional<std::string> cache_dir;
  std::optional<std::string> run_base_dir;
};

void apply(const Overrides& overrides, RunConfig& config) {
  if (overrides.corpus) config.corpus_path = *overrides.corpus;
  if (overrides.profile) config.target_profile = *overrides.profile;
  if (overrides.mode) config.modes = {judge_mode_from_string(*overrides.mode)};
  if (overrides.threshold) config.rating_threshold = *overrides.threshold;
  if (overrides.seed) config.seed = *overrides.seed;
  if (overrides.max_in_flight) config.max_in_flight = *overrides.max_in_flight;
  if (overrides.intervention_n) config.intervention.n = *overrides.intervention_n;
  if (!overrides.conditions.empty()) {
    config.intervention.conditions.clear();
    for (const auto& name : overrides.conditions)
      config.intervention.conditions.push_back(prefix_key_from_string(name));
  }
  if (overrides.cache_dir) config.cache_dir = *overrides.cache_dir;
  if (overrides.run_base_dir) config.run_base_dir = *overrides.run_base_dir;
}

int run_phases(const std::string& config_path, const std::set<Phase>& phases, bool force,
               const Overrides& overrides) {
  try {
    RunConfig config = load_run_config(config_path);
    apply(overrides, config);
    validate(config);
    const PipelineResult result = run_pipeline(config, phases, force);
    std::cout << "run directory: " << result.run_dir.string() << "\n"
              << "provider calls: " << result.stats.gateway.provider_calls
              << ", cache hits: " << result.stats.gateway.cache_hits
              << ", parse failures: " << result.stats.parse_failures << "\n";
    if (result.exit_code == kExitPartial)
      std::cerr << "warning: unparseable responses exceeded the configured tolerance\n";
    return result.exit_code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPhaseFailure;
  }
}

void add_common_options(CLI::App* cmd, std::string& config_path, Overrides& overrides,
                        bool& force) {
  cmd->add_option("--config", config_path, "run configuration JSON file")->required();
  cmd->add_flag("--force", force, "recompute outputs even if they exist");
  cmd->add_option("--corpus", overrides.corpus, "override the corpus path");
  cmd->add_option("--profile", overrides.profile, "override the target model profile");
  cmd->add_option("--threshold", overrides.threshold, "override the rating threshold")
      ->check(CLI::Range(1, 5));
  cmd->add_option("--seed", overrides.seed, "override the sampling seed");
  cmd->add_option("--max-in-flight", overrides.max_in_flight,
                  "override the request concurrency bound");
  cmd->add_option("--cache-dir", overrides.cache_dir, "override the response cache directory");
  cmd->add_option("--run-dir", overrides.run_base_dir, "override the run output root");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch audit pipeline for LLM over-sensitivity in content moderation"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;
  bool force = false;
  std::vector<std::string> phase_names;

  auto* judge = app.add_subcommand("judge", "judge the benign corpus under the moderation prompts");
  add_common_options(judge, config_path, overrides, force);
  judge->add_option("--mode", overrides.mode, "binary or rating")
      ->check(CLI::IsMember({"binary", "rating"}));

  auto* collect_fp =
      app.add_subcommand("collect-fp", "materialize the false-positive cohort manifest");
  add_common_options(collect_fp, config_path, overrides, force);

  auto* sample_tn =
      app.add_subcommand("sample-tn", "sample the true-negative cohort manifest");
  add_common_options(sample_tn, config_path, overrides, force);

  auto* scenarios =
      app.add_subcommand("scenarios", "elicit imagined scenarios for both cohorts");
  add_common_options(scenarios, config_path, overrides, force);

  auto* intervene =
      app.add_subcommand("intervene", "run the paired prefix intervention (rating mode)");
  add_common_options(intervene, config_path, overrides, force);
  intervene->add_option("--n", overrides.intervention_n, "number of benign comments to sample");
  intervene
      ->add_option("--conditions", overrides.conditions,
                   "prefix conditions to run (default: pol wok dem rep neu)")
      ->delimiter(',');

  auto* run = app.add_subcommand("run", "run pipeline phases end to end");
  add_common_options(run, config_path, overrides, force);
  run->add_option("--phases", phase_names,
                  "subset of judge,partition,collect,scenarios,gaps,index,contrast,intervene,report")
      ->delimiter(',');

  auto* report = app.add_subcommand("report", "assemble the audit report from stored phases");
  add_common_options(report, config_path, overrides, force);

  CLI11_PARSE(app, argc, argv);

  try {
    if (judge->parsed()) return run_phases(config_path, {Phase::judge}, force, overrides);
    if (collect_fp->parsed() || sample_tn->parsed())
      return run_phases(config_path, {Phase::collect}, force, overrides);
    if (scenarios->parsed()) return run_phases(config_path, {Phase::scenarios}, force, overrides);
    if (intervene->parsed()) return run_phases(config_path, {Phase::intervene}, force, overrides);
    if (report->parsed()) return run_phases(config_path, {Phase::report}, force, overrides);
    if (run->parsed()) {
      std::set<Phase> phases;
      if (phase_names.empty()) {
        for (Phase phase : all_phases()) phases.insert(phase);
      } else {
        for (const auto& name : phase_names) phases.insert(phase_from_string(name));
      }
      return run_phases(config_path, phases, force, overrides);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }
  return kExitOk;
}
