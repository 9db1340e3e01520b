// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seedforge/feature_catalog.hpp"
#include "seedforge/fuzzer_bridge.hpp"
#include "seedforge/generator_forge.hpp"
#include "seedforge/llm/backend.hpp"
#include "seedforge/llm/gateway.hpp"
#include "seedforge/mutation_engine.hpp"
#include "seedforge/sim_fuzzer.hpp"

namespace seedforge {

enum class CampaignMode { Live, OfflinePregenerate, Simulate };

std::string_view to_string(CampaignMode mode) noexcept;

struct LlmSettings {
  std::string backend = "mock";  // "mock" | "http"
  std::filesystem::path mock_script;
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "OPENAI_API_KEY";
  double temperature = 0.7;
  int max_tokens = 4096;
  int retries = 2;
  int timeout_secs = 120;
  std::optional<std::uint64_t> token_budget;
  std::optional<double> cost_budget;
  llm::PriceTable prices;
  std::filesystem::path templates_dir;

  bool operator==(const LlmSettings&) const = default;
};

struct InstallerSettings {
  bool enabled = false;
  std::vector<std::string> command{"python3", "-m", "pip", "install", "{package}"};
  std::optional<std::set<std::string>> allowlist;
  bool dry_run = false;
  int timeout_secs = 300;

  bool operator==(const InstallerSettings&) const = default;
};

struct SandboxSettings {
  std::vector<std::string> interpreter{"python3"};
  std::string script_name = "generator.py";
  double timeout_secs = 30.0;
  std::uint64_t max_file_bytes = 16ULL * 1024 * 1024;
  std::size_t max_files = 64;
  bool keep_artifacts = false;
  std::map<std::string, std::string> env;

  bool operator==(const SandboxSettings&) const = default;
};

struct FuzzerSettings {
  std::int64_t stall_threshold_secs = 600;
  std::int64_t poll_interval_secs = 10;
  StatsKeyMap stats_keys;
  std::filesystem::path corpus_dir;
  std::filesystem::path stats_file;
  std::filesystem::path queue_dir;
  /// Fuzzer command line for live mode; empty when the fuzzer is started
  /// separately and only monitored.
  std::vector<std::string> command;
  std::int64_t wall_clock_secs = 24 * 3600;

  bool operator==(const FuzzerSettings&) const = default;
};

struct InitialSeed {
  std::string name;
  std::string content;
  bool operator==(const InitialSeed&) const = default;
};

struct SimulatorSettings {
  nlohmann::json target = nlohmann::json::object();
  std::vector<InitialSeed> initial_seeds;
  double exec_seconds = 1.0;
  std::uint64_t max_execs = 5000;
  std::uint64_t seed = 0;

  bool operator==(const SimulatorSettings&) const = default;
};

/// Whole-campaign configuration, read from one JSON file. Relative paths are
/// resolved against the directory of that file.
struct CampaignConfig {
  std::vector<std::string> formats;
  CampaignMode mode = CampaignMode::Simulate;
  std::filesystem::path state_dir;
  LlmSettings llm;
  SynthesisBudget synthesis;
  InstallerSettings installer;
  SandboxSettings sandbox;
  /// Merged over the shipped defaults.
  SuffixMap suffixes;
  FuzzerSettings fuzzer;
  SimulatorSettings simulator;
  std::size_t mutations_per_stall = 1;
  /// Cap on features synthesized per format; 0 keeps all.
  std::size_t max_features = 0;
  std::uint64_t rng_seed = 0;
  /// Pregenerated archive to start from.
  std::optional<std::filesystem::path> archive;

  /// Throws ConfigError.
  static CampaignConfig from_json(const nlohmann::json& json, const std::filesystem::path& base_dir = {});
  static CampaignConfig load(const std::filesystem::path& file);
  nlohmann::json to_json() const;
  /// Throws ConfigError on an unusable configuration.
  void validate() const;

  bool operator==(const CampaignConfig&) const = default;
};

/// Progress of init work for one format, so an interrupted phase resumes
/// where it stopped.
struct FormatProgress {
  bool analyzed = false;
  std::vector<std::string> features;               // to synthesize, analysis order
  std::map<std::string, std::string> synthesized;  // feature -> "valid" | "failed"
  bool rare_discovered = false;
  std::vector<std::string> rare;
  std::map<std::string, std::string> rare_done;    // feature -> "valid" | "failed" | "skipped"
  bool init_done = false;
  bool init_failed = false;

  bool operator==(const FormatProgress&) const = default;
};

struct FormatStats {
  std::uint64_t generators_synthesized = 0;
  std::uint64_t synthesis_failed = 0;
  std::map<std::string, std::uint64_t> mutations;  // mutator kind -> valid children
  std::uint64_t mutation_failed = 0;
  std::uint64_t seeds_harvested = 0;
  std::map<std::string, std::uint64_t> injected;   // "synthesis" | "mutation" -> files
  AttributionCounts attribution;
  std::uint64_t stall_phases = 0;

  std::uint64_t seeds_injected() const;
  bool operator==(const FormatStats&) const = default;
};

struct PendingStall {
  std::string format;
  std::size_t remaining = 0;
  bool operator==(const PendingStall&) const = default;
};

/// Everything a campaign needs to resume.
struct CampaignState {
  FeatureDB features;
  GeneratorDB generators;
  PatternDB patterns;
  ProvenanceIndex provenance;
  llm::UsageLedger ledger;

  std::map<std::string, FormatProgress> progress;
  std::map<std::string, FormatStats> stats;
  AttributionCounts attribution;
  std::uint64_t new_finds = 0;
  std::uint64_t llm_calls = 0;
  bool degraded = false;
  std::string degraded_reason;
  bool init_polled = false;
  std::int64_t last_stall_at = 0;
  std::size_t next_stall_format = 0;
  std::optional<PendingStall> pending_stall;
  std::string rng_state;
  nlohmann::json backend_state;
  nlohmann::json fuzzer_state;
  CoverageSnapshot coverage;
  std::map<std::string, double> phase_seconds;
  std::string archive_imported;
  std::uint64_t sequence = 0;

  bool empty() const noexcept { return sequence == 0; }
  bool operator==(const CampaignState&) const = default;
};

/// Writes a new checkpoint generation under `state_dir` and switches CURRENT to
/// it. Generator scripts go to `state_dir/generators/<id><extension>`.
void persist_state(CampaignState& state, const std::filesystem::path& state_dir,
                   std::string_view script_extension = ".py");
/// Empty state for a directory without checkpoints. Throws CorruptState when
/// the current checkpoint fails its checksums or does not parse.
CampaignState load_state(const std::filesystem::path& state_dir, std::string_view script_extension = ".py");

struct FormatReport {
  std::string format;
  FormatStats stats;
  std::size_t generators = 0;
  std::size_t features = 0;
  std::size_t patterns = 0;
  bool init_done = false;
  bool init_failed = false;
};

struct CampaignReport {
  CampaignMode mode = CampaignMode::Simulate;
  std::vector<FormatReport> formats;
  AttributionCounts attribution;
  std::uint64_t new_finds = 0;
  llm::TokenTotals tokens;
  double cost = 0.0;
  std::uint64_t llm_calls = 0;
  bool degraded = false;
  std::string degraded_reason;
  CoverageSnapshot coverage;
  std::vector<std::uint32_t> covered_edges;  // simulate mode
  std::map<std::string, double> phase_seconds;
  std::string archive_imported;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

CampaignReport build_report(const CampaignConfig& config, const CampaignState& state);

/// The fuzzer side of a campaign.
class FuzzerAdapter {
 public:
  virtual ~FuzzerAdapter() = default;
  /// Called once per process before the loop. `fresh` is true for a new state.
  virtual void start(ProvenanceIndex& index, bool fresh) = 0;
  /// Runs for one poll interval and reports new coverage finds.
  virtual std::vector<NewFind> advance(ProvenanceIndex& index) = 0;
  virtual CoverageSnapshot snapshot() = 0;
  virtual std::int64_t now() const = 0;
  virtual bool finished() const = 0;
  virtual void stop() = 0;
  virtual nlohmann::json save() const = 0;
  virtual void load(const nlohmann::json& state) = 0;
  virtual std::vector<std::uint32_t> covered_edges() const { return {}; }
};

class SimulatedAdapter final : public FuzzerAdapter {
 public:
  SimulatedAdapter(const SimulatorSettings& settings, const std::filesystem::path& corpus_dir,
                   std::int64_t poll_interval_secs);

  void start(ProvenanceIndex& index, bool fresh) override;
  std::vector<NewFind> advance(ProvenanceIndex& index) override;
  CoverageSnapshot snapshot() override { return fuzzer_.snapshot(); }
  std::int64_t now() const override { return fuzzer_.now(); }
  bool finished() const override { return fuzzer_.execs() >= max_execs_; }
  void stop() override {}
  nlohmann::json save() const override { return fuzzer_.save(); }
  void load(const nlohmann::json& state) override { fuzzer_.load(state); }
  std::vector<std::uint32_t> covered_edges() const override;

  const SimulatedFuzzer& fuzzer() const noexcept { return fuzzer_; }

 private:
  SimulatedFuzzer fuzzer_;
  std::vector<InitialSeed> initial_;
  std::uint64_t execs_per_poll_;
  std::uint64_t max_execs_;
};

/// AFL++ (or any fuzzer with the same stats file and queue naming) running as
/// a child process or started externally.
class AflAdapter final : public FuzzerAdapter {
 public:
  explicit AflAdapter(FuzzerSettings settings);
  ~AflAdapter() override;

  void start(ProvenanceIndex& index, bool fresh) override;
  std::vector<NewFind> advance(ProvenanceIndex& index) override;
  CoverageSnapshot snapshot() override;
  std::int64_t now() const override;
  bool finished() const override;
  void stop() override;
  nlohmann::json save() const override;
  void load(const nlohmann::json& state) override;

 private:
  FuzzerSettings settings_;
  AflQueueWatcher watcher_;
  mutable int child_ = -1;
  std::int64_t started_ = 0;
  CoverageSnapshot last_;
};

/// Orchestrates synthesis, mutation, injection and monitoring for all
/// configured formats, checkpointing into the state directory.
class Campaign {
 public:
  /// Builds backend, installer and fuzzer from the config unless supplied.
  explicit Campaign(CampaignConfig config, std::unique_ptr<llm::ChatBackend> backend = nullptr,
                    std::unique_ptr<PackageInstaller> installer = nullptr,
                    std::unique_ptr<FuzzerAdapter> fuzzer = nullptr);
  ~Campaign();

  /// Live or simulate mode: init, then monitor and mutate until the fuzzer
  /// finishes. Writes report.json and report.txt into the state directory.
  CampaignReport run();
  /// Init phase for every format with seeds written to `out/seeds`, then the
  /// databases exported to `out/state`.
  CampaignReport pregenerate(const std::filesystem::path& out);

  /// Throws ZeroValidGenerators when the format ends up without a generator.
  void init_phase(const std::string& format);
  void stall_phase(const std::string& format);

  const CampaignState& state() const noexcept { return state_; }
  const CampaignConfig& config() const noexcept { return config_; }
  llm::Gateway& gateway() noexcept { return *gateway_; }
  FuzzerAdapter* fuzzer() noexcept { return fuzzer_.get(); }
  /// "init:<format>", "mutate:<kind>:<format>", "stall:<format>" in order.
  const std::vector<std::string>& trace() const noexcept { return trace_; }
  CampaignReport report() const;

 private:
  struct Runtime;

  void restore();
  void import_archive(const std::filesystem::path& archive);
  void checkpoint();
  void event(nlohmann::json record);
  void degrade(const std::string& reason);
  bool llm_allowed() const;
  std::size_t inject_batch(const std::string& format, const ExecutionResult& execution,
                           const std::string& generator_id, SeedPhase phase);
  void run_stall_work();
  void on_mutation_hit(const std::string& generator_id);
  std::filesystem::path corpus_dir() const;

  CampaignConfig config_;
  CampaignState state_;
  Rng rng_;
  std::unique_ptr<llm::Gateway> gateway_;
  std::unique_ptr<PackageInstaller> installer_;
  std::unique_ptr<FuzzerAdapter> fuzzer_;
  std::unique_ptr<Runtime> rt_;
  std::filesystem::path corpus_override_;
  std::vector<std::string> trace_;
  std::uint64_t calls_at_restore_ = 0;
};

}  // namespace seedforge
