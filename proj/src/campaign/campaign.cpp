// SPDX-License-Identifier: Apache-2.0

#include "seedforge/campaign.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>

#include "seedforge/common/error.hpp"
#include "seedforge/common/log.hpp"

namespace seedforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string script_extension(const CampaignConfig& config) {
  return fs::path(config.sandbox.script_name).extension().string();
}

std::unique_ptr<llm::ChatBackend> make_backend(const LlmSettings& s) {
  if (s.backend == "mock") return std::make_unique<llm::MockBackend>(llm::MockBackend::load(s.mock_script));
  llm::HttpBackendConfig http;
  http.base_url = s.base_url;
  http.path = s.path;
  http.model = s.model;
  if (const char* key = std::getenv(s.api_key_env.c_str())) http.api_key = key;
  http.timeout = std::chrono::seconds(s.timeout_secs);
  return std::make_unique<llm::HttpBackend>(std::move(http));
}

SandboxConfig sandbox_config(const CampaignConfig& c) {
  SandboxConfig s;
  s.interpreter = c.sandbox.interpreter;
  s.script_name = c.sandbox.script_name;
  s.scratch_root = c.state_dir / "scratch";
  s.limits.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(c.sandbox.timeout_secs * 1000));
  s.limits.max_file_bytes = c.sandbox.max_file_bytes;
  s.limits.max_files = c.sandbox.max_files;
  s.env = c.sandbox.env;
  s.keep_artifacts = c.sandbox.keep_artifacts;
  return s;
}

class PhaseTimer {
 public:
  PhaseTimer(CampaignState& state, const char* phase, bool enabled)
      : state_(state), phase_(phase), enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  ~PhaseTimer() {
    if (!enabled_) return;
    std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
    state_.phase_seconds[phase_] += elapsed.count();
  }

 private:
  CampaignState& state_;
  const char* phase_;
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

struct Campaign::Runtime {
  Runtime(Campaign& c)
      : sandbox(sandbox_config(c.config_)),
        catalog(*c.gateway_, c.state_.features),
        forge(*c.gateway_, sandbox, *c.installer_, c.state_.generators, c.config_.synthesis,
              InstallPolicy{c.config_.installer.allowlist}),
        engine(forge, c.state_.patterns),
        suffixes(default_suffix_map()) {
    for (const auto& [format, list] : c.config_.suffixes) suffixes[to_upper(format)] = list;
  }

  Sandbox sandbox;
  FeatureCatalog catalog;
  GeneratorForge forge;
  MutationEngine engine;
  SuffixMap suffixes;
  bool fresh = true;
};

Campaign::Campaign(CampaignConfig config, std::unique_ptr<llm::ChatBackend> backend,
                   std::unique_ptr<PackageInstaller> installer, std::unique_ptr<FuzzerAdapter> fuzzer)
    : config_(std::move(config)), rng_(config_.rng_seed) {
  config_.validate();
  if (!backend) backend = make_backend(config_.llm);
  if (config_.llm.prices.count(backend->model_id()) == 0) {
    throw Error(ErrorKind::ConfigError, "no price entry for model '" + backend->model_id() + "'");
  }
  auto prompts = config_.llm.templates_dir.empty() ? llm::PromptLibrary::builtin()
                                                   : llm::PromptLibrary::load(config_.llm.templates_dir);
  llm::GatewayConfig gateway_config;
  gateway_config.decoding = llm::Decoding{config_.llm.temperature, static_cast<std::uint32_t>(config_.llm.max_tokens)};
  gateway_config.prices = config_.llm.prices;
  gateway_config.token_cap = config_.llm.token_budget;
  gateway_config.cost_cap = config_.llm.cost_budget;
  gateway_config.retries = config_.llm.retries;
  gateway_ = std::make_unique<llm::Gateway>(std::move(backend), std::move(prompts), gateway_config);

  if (installer) {
    installer_ = std::move(installer);
  } else if (config_.installer.enabled) {
    installer_ = std::make_unique<CommandInstaller>(
        config_.installer.command, std::chrono::seconds(config_.installer.timeout_secs), config_.installer.dry_run);
  } else {
    installer_ = std::make_unique<DisabledInstaller>();
  }

  if (fuzzer) {
    fuzzer_ = std::move(fuzzer);
  } else if (config_.mode == CampaignMode::Simulate) {
    fuzzer_ = std::make_unique<SimulatedAdapter>(config_.simulator, corpus_dir(), config_.fuzzer.poll_interval_secs);
  } else if (config_.mode == CampaignMode::Live) {
    fuzzer_ = std::make_unique<AflAdapter>(config_.fuzzer);
  }

  rt_ = std::make_unique<Runtime>(*this);
  restore();
}

Campaign::~Campaign() = default;

fs::path Campaign::corpus_dir() const {
  if (!corpus_override_.empty()) return corpus_override_;
  if (!config_.fuzzer.corpus_dir.empty()) return config_.fuzzer.corpus_dir;
  return config_.state_dir / "corpus";
}

void Campaign::restore() {
  fs::create_directories(config_.state_dir);
  state_ = load_state(config_.state_dir, script_extension(config_));
  rt_->fresh = state_.empty();
  if (rt_->fresh && config_.archive && fs::exists(*config_.archive / "state" / "CURRENT")) {
    import_archive(*config_.archive);
  }
  if (!state_.rng_state.empty()) rng_.load(state_.rng_state);
  if (!state_.backend_state.is_null()) gateway_->backend().load_state(state_.backend_state);
  gateway_->restore_ledger(state_.ledger);
  if (fuzzer_ && !state_.fuzzer_state.is_null()) fuzzer_->load(state_.fuzzer_state);
  calls_at_restore_ = state_.llm_calls;
  fs::remove_all(config_.state_dir / "scratch");
  fs::create_directories(config_.state_dir / "scratch");
  if (config_.mode != CampaignMode::OfflinePregenerate) fs::create_directories(corpus_dir());

  json valid = json::array();
  for (const auto& g : state_.generators.all()) {
    if (const auto* root = std::get_if<RootLineage>(&g.lineage); root && g.status == GeneratorStatus::Valid) {
      valid.push_back({{"format", g.format}, {"feature", root->feature}});
    }
  }
  event({{"event", "start"}, {"resumed", !rt_->fresh}, {"sequence", state_.sequence}, {"valid", valid}});
}

void Campaign::import_archive(const fs::path& archive) {
  auto imported = load_state(archive / "state", script_extension(config_));
  state_.features = std::move(imported.features);
  state_.generators = std::move(imported.generators);
  state_.patterns = std::move(imported.patterns);
  state_.provenance = std::move(imported.provenance);
  state_.progress = std::move(imported.progress);
  state_.stats = std::move(imported.stats);
  state_.archive_imported = archive.string();

  const auto seeds = archive / "seeds";
  std::size_t copied = 0;
  if (fs::is_directory(seeds)) {
    fs::create_directories(corpus_dir());
    for (const auto& entry : fs::directory_iterator(seeds)) {
      if (!entry.is_regular_file()) continue;
      const auto target = corpus_dir() / entry.path().filename();
      if (fs::exists(target)) continue;
      fs::copy_file(entry.path(), target);
      ++copied;
    }
  }
  log_info("imported archive ", archive.string(), ": ", state_.generators.size(), " generators, ", copied,
           " seeds");
}

void Campaign::checkpoint() {
  state_.rng_state = rng_.save();
  state_.backend_state = gateway_->backend().save_state();
  state_.ledger = gateway_->ledger();
  state_.llm_calls = calls_at_restore_ + gateway_->completions();
  if (fuzzer_) {
    state_.fuzzer_state = fuzzer_->save();
    state_.coverage = fuzzer_->snapshot();
  }
  persist_state(state_, config_.state_dir, script_extension(config_));
}

void Campaign::event(json record) {
  std::ofstream out(config_.state_dir / "events.log", std::ios::app);
  out << record.dump() << '\n';
}

void Campaign::degrade(const std::string& reason) {
  if (state_.degraded) return;
  state_.degraded = true;
  state_.degraded_reason = reason;
  log_warn("LLM budget exhausted, continuing without LLM calls: ", reason);
  event({{"event", "degraded"}, {"reason", reason}});
}

bool Campaign::llm_allowed() const { return !state_.degraded; }

std::size_t Campaign::inject_batch(const std::string& format, const ExecutionResult& execution,
                                   const std::string& generator_id, SeedPhase phase) {
  // A mutation whose script matches a stored root is credited as that root.
  if (const auto* stored = state_.generators.find(generator_id)) {
    phase = stored->is_root() ? SeedPhase::Synthesis : SeedPhase::Mutation;
  }
  auto batch = harvest(execution.workdir, suffixes_for(rt_->suffixes, format), rt_->sandbox.config().limits);
  batch.generator_id = generator_id;
  batch.phase = phase;
  auto& stats = state_.stats[format];
  stats.seeds_harvested += batch.seeds.size();
  auto written = inject(batch, corpus_dir(), state_.provenance);
  stats.injected[phase == SeedPhase::Mutation ? "mutation" : "synthesis"] += written.size();
  rt_->sandbox.discard(execution);
  return written.size();
}

void Campaign::init_phase(const std::string& format) {
  auto& progress = state_.progress[format];
  auto& stats = state_.stats[format];
  if (progress.init_done) return;
  trace_.push_back("init:" + format);
  if (!llm_allowed()) {
    log_warn("skipping init for ", format, ": ", state_.degraded_reason);
    return;
  }
  PhaseTimer timer(state_, "init", config_.mode != CampaignMode::Simulate);
  try {
    if (!progress.analyzed) {
      try {
        for (const auto& f : rt_->catalog.analyze_features(format, config_.max_features)) {
          progress.features.push_back(f.name);
        }
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::BudgetExceeded) throw;
        log_warn("feature analysis for ", format, " failed: ", e.what());
      }
      progress.analyzed = true;
      checkpoint();
    }

    for (const auto& name : progress.features) {
      if (progress.synthesized.count(name) != 0) continue;
      const Feature* known = state_.features.find(format, name);
      const Feature feature = known ? *known : Feature{name, "", format};
      event({{"event", "synthesize"}, {"format", format}, {"feature", name}});
      std::string result = "failed";
      try {
        auto outcome = rt_->forge.synthesize(format, feature);
        if (auto* forged = std::get_if<ForgedGenerator>(&outcome)) {
          ++stats.generators_synthesized;
          result = "valid";
          inject_batch(format, forged->execution, forged->generator.id, SeedPhase::Synthesis);
        } else {
          log_warn("no generator for ", format, " / ", name, ": ", std::get<Failure>(outcome).detail);
        }
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::BudgetExceeded) throw;
        log_warn("synthesis for ", format, " / ", name, " failed: ", e.what());
      }
      if (result == "failed") ++stats.synthesis_failed;
      progress.synthesized[name] = result;
      checkpoint();
    }

    if (state_.generators.valid(format).empty()) {
      progress.init_done = true;
      progress.init_failed = true;
      checkpoint();
      throw Error(ErrorKind::ZeroValidGenerators, format);
    }

    if (!progress.rare_discovered) {
      try {
        for (const auto& f : rt_->catalog.discover_rare_features(format)) progress.rare.push_back(f.name);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::BudgetExceeded) throw;
        log_warn("rare feature discovery for ", format, " failed: ", e.what());
      }
      progress.rare_discovered = true;
      checkpoint();
    }

    for (const auto& name : progress.rare) {
      if (progress.rare_done.count(name) != 0) continue;
      const Feature* known = state_.features.find(format, name);
      const Feature feature = known ? *known : Feature{name, "", format, FeatureOrigin::Rare};
      const Generator parent = select_generator(state_.generators, format, rng_);
      trace_.push_back("mutate:" + std::string(to_string(MutatorKind::RareFeature)) + ":" + format);
      std::string result = "failed";
      try {
        auto outcome = rt_->engine.mutate_rare(parent, feature);
        if (auto* child = std::get_if<MutatedGenerator>(&outcome)) {
          ++stats.mutations[std::string(to_string(MutatorKind::RareFeature))];
          result = "valid";
          inject_batch(format, child->execution, child->generator.id, SeedPhase::Mutation);
        }
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::BudgetExceeded) throw;
        log_warn("rare-feature mutation for ", format, " / ", name, " failed: ", e.what());
      }
      if (result == "failed") ++stats.mutation_failed;
      progress.rare_done[name] = result;
      checkpoint();
    }

    progress.init_done = true;
    checkpoint();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::BudgetExceeded) throw;
    degrade(e.what());
    checkpoint();
  }
}

void Campaign::stall_phase(const std::string& format) {
  const auto progress = state_.progress.find(format);
  if (progress == state_.progress.end() || !progress->second.init_done) {
    log_warn("stall for ", format, " before its init phase completed; ignored");
    return;
  }
  trace_.push_back("stall:" + format);
  if (!llm_allowed()) return;
  if (state_.generators.valid(format).empty()) {
    log_warn("no valid generator for ", format, "; nothing to mutate");
    if (state_.pending_stall) {
      state_.pending_stall.reset();
      checkpoint();
    }
    return;
  }
  PhaseTimer timer(state_, "stall", config_.mode != CampaignMode::Simulate);
  auto& stats = state_.stats[format];
  if (!state_.pending_stall || state_.pending_stall->format != format) {
    state_.pending_stall = PendingStall{format, config_.mutations_per_stall};
    ++stats.stall_phases;
    checkpoint();
  }

  while (state_.pending_stall && state_.pending_stall->remaining > 0 && llm_allowed()) {
    const Generator parent = select_generator(state_.generators, format, rng_);
    const auto kind = choose_mutator(rng_, state_.patterns, format, MutationPhase::Stall);
    std::optional<MutationPattern> example;
    if (kind == MutatorKind::Pattern) example = select_pattern(state_.patterns, format, rng_);
    trace_.push_back("mutate:" + std::string(to_string(kind)) + ":" + format);
    bool ok = false;
    try {
      Outcome<MutatedGenerator> outcome =
          kind == MutatorKind::Pattern ? rt_->engine.mutate_pattern(parent, *example)
          : rt_->engine.mutate_havoc(parent, kind == MutatorKind::HavocFeature ? HavocAxis::Feature
                                                                                : HavocAxis::Structure);
      if (auto* child = std::get_if<MutatedGenerator>(&outcome)) {
        ok = true;
        ++stats.mutations[std::string(to_string(kind))];
        inject_batch(format, child->execution, child->generator.id, SeedPhase::Mutation);
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::BudgetExceeded) {
        degrade(e.what());
      } else {
        log_warn(to_string(kind), " mutation for ", format, " failed: ", e.what());
      }
    }
    if (!ok) ++stats.mutation_failed;
    if (--state_.pending_stall->remaining == 0 || !llm_allowed()) state_.pending_stall.reset();
    checkpoint();
  }
}

void Campaign::run_stall_work() {
  if (state_.pending_stall) stall_phase(state_.pending_stall->format);
}

void Campaign::on_mutation_hit(const std::string& generator_id) {
  const auto* child = state_.generators.find(generator_id);
  if (child == nullptr) return;
  const auto* link = std::get_if<MutatedLineage>(&child->lineage);
  if (link == nullptr) return;
  const auto* parent = state_.generators.find(link->parent_id);
  if (parent == nullptr) return;
  rt_->engine.record_useful_mutation(*parent, *child);
}

CampaignReport Campaign::run() {
  if (!fuzzer_) throw Error(ErrorKind::ConfigError, "run needs live or simulate mode");
  const bool timed = config_.mode != CampaignMode::Simulate;
  fuzzer_->start(state_.provenance, rt_->fresh);

  const auto threshold = config_.fuzzer.stall_threshold_secs;
  if (poll_state(fuzzer_->snapshot(), fuzzer_->now(), threshold, !state_.init_polled) == FuzzState::Init) {
    for (const auto& format : config_.formats) {
      try {
        init_phase(format);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::ZeroValidGenerators) throw;
        log_warn("init for ", format, " produced no valid generator");
      }
    }
    state_.init_polled = true;
    checkpoint();
  }
  run_stall_work();

  while (!fuzzer_->finished()) {
    std::vector<NewFind> finds;
    {
      PhaseTimer timer(state_, "fuzz", timed);
      finds = fuzzer_->advance(state_.provenance);
    }
    for (const auto& find : finds) {
      auto counts = attribute({find}, state_.provenance, [this](const std::string& id) { on_mutation_hit(id); });
      state_.attribution += counts;
      std::string generator;
      resolve_provenance(state_.provenance, find.entry, &generator);
      if (generator.empty() && !find.source.empty()) resolve_provenance(state_.provenance, find.source, &generator);
      if (const auto* g = state_.generators.find(generator)) state_.stats[g->format].attribution += counts;
    }
    state_.new_finds += finds.size();

    auto snapshot = fuzzer_->snapshot();
    snapshot.last_find_unix = std::max(snapshot.last_find_unix, state_.last_stall_at);
    const auto now = fuzzer_->now();
    if (poll_state(snapshot, now, threshold, false) == FuzzState::Stall && llm_allowed()) {
      const auto& format = config_.formats[state_.next_stall_format++ % config_.formats.size()];
      state_.last_stall_at = now;
      stall_phase(format);
    }
    checkpoint();
  }
  fuzzer_->stop();
  checkpoint();

  auto result = report();
  write_file_atomic(config_.state_dir / "report.json", result.to_json().dump(2) + "\n");
  write_file_atomic(config_.state_dir / "report.txt", result.to_text());
  event({{"event", "finish"}, {"fault_points", fault_points_passed()}});
  return result;
}

CampaignReport Campaign::pregenerate(const fs::path& out) {
  corpus_override_ = out / "seeds";
  fs::create_directories(corpus_override_);
  for (const auto& format : config_.formats) {
    try {
      init_phase(format);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ZeroValidGenerators) throw;
      log_warn("init for ", format, " produced no valid generator");
    }
  }
  checkpoint();

  CampaignState archive = state_;
  archive.sequence = 0;
  archive.backend_state = nullptr;
  archive.fuzzer_state = nullptr;
  archive.init_polled = false;
  persist_state(archive, out / "state", script_extension(config_));

  auto result = report();
  write_file_atomic(config_.state_dir / "report.json", result.to_json().dump(2) + "\n");
  write_file_atomic(config_.state_dir / "report.txt", result.to_text());
  event({{"event", "finish"}, {"fault_points", fault_points_passed()}});
  return result;
}

CampaignReport Campaign::report() const { return build_report(config_, state_); }

}  // namespace seedforge
