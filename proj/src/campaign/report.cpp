// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <sstream>

#include "seedforge/campaign.hpp"

namespace seedforge {

using nlohmann::json;

namespace {

constexpr AttributionClass kClasses[] = {AttributionClass::Initial, AttributionClass::Synthesis,
                                         AttributionClass::Mutation, AttributionClass::Unknown};

json counts_json(const AttributionCounts& counts) {
  json j = json::object();
  for (auto c : kClasses) j[std::string(to_string(c))] = counts[c];
  return j;
}

std::string money(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

CampaignReport build_report(const CampaignConfig& config, const CampaignState& state) {
  CampaignReport r;
  r.mode = config.mode;
  for (const auto& format : config.formats) {
    FormatReport f;
    f.format = format;
    if (auto it = state.stats.find(format); it != state.stats.end()) f.stats = it->second;
    if (auto it = state.progress.find(format); it != state.progress.end()) {
      f.init_done = it->second.init_done;
      f.init_failed = it->second.init_failed;
    }
    f.generators = state.generators.size(format);
    f.features = state.features.size(format);
    f.patterns = state.patterns.patterns(format).size();
    r.formats.push_back(std::move(f));
  }
  r.attribution = state.attribution;
  r.new_finds = state.new_finds;
  r.tokens = state.ledger.totals();
  r.cost = state.ledger.cost(config.llm.prices);
  r.llm_calls = state.llm_calls;
  r.degraded = state.degraded;
  r.degraded_reason = state.degraded_reason;
  r.coverage = state.coverage;
  if (state.fuzzer_state.is_object() && state.fuzzer_state.contains("covered")) {
    r.covered_edges = state.fuzzer_state.at("covered").get<std::vector<std::uint32_t>>();
  }
  r.phase_seconds = state.phase_seconds;
  r.archive_imported = state.archive_imported;
  return r;
}

json CampaignReport::to_json() const {
  json formats_json = json::array();
  for (const auto& f : formats) {
    formats_json.push_back({{"format", f.format},
                            {"init_done", f.init_done},
                            {"init_failed", f.init_failed},
                            {"features", f.features},
                            {"generators", f.generators},
                            {"generators_synthesized", f.stats.generators_synthesized},
                            {"synthesis_failed", f.stats.synthesis_failed},
                            {"mutations", f.stats.mutations},
                            {"mutation_failed", f.stats.mutation_failed},
                            {"patterns", f.patterns},
                            {"stall_phases", f.stats.stall_phases},
                            {"seeds_harvested", f.stats.seeds_harvested},
                            {"seeds_injected", f.stats.seeds_injected()},
                            {"injected_by_source", f.stats.injected},
                            {"attribution", counts_json(f.stats.attribution)}});
  }
  json j = {{"mode", std::string(seedforge::to_string(mode))},
            {"formats", formats_json},
            {"attribution", counts_json(attribution)},
            {"new_finds", new_finds},
            {"llm",
             {{"calls", llm_calls},
              {"prompt_tokens", tokens.prompt},
              {"completion_tokens", tokens.completion},
              {"total_tokens", tokens.sum()},
              {"cost", cost}}},
            {"degraded", degraded},
            {"degraded_reason", degraded_reason},
            {"coverage",
             {{"edges_found", coverage.edges_found},
              {"execs_done", coverage.execs_done},
              {"last_find", coverage.last_find_unix},
              {"queue_size", coverage.queue_size}}}};
  if (!covered_edges.empty()) j["covered_edges"] = covered_edges;
  if (!phase_seconds.empty()) j["phase_seconds"] = phase_seconds;
  if (!archive_imported.empty()) j["archive"] = archive_imported;
  return j;
}

std::string CampaignReport::to_text() const {
  std::ostringstream out;
  out << "campaign report (" << seedforge::to_string(mode) << ")\n";
  out << "coverage: " << coverage.edges_found << " edges, " << coverage.execs_done << " execs, "
      << coverage.queue_size << " queue entries\n";
  out << "new finds: " << new_finds << "\n";
  out << "attribution:";
  for (auto c : kClasses) out << " " << seedforge::to_string(c) << "=" << attribution[c];
  out << "\n";
  out << "llm: " << llm_calls << " calls, " << tokens.prompt << " prompt + " << tokens.completion
      << " completion tokens, cost " << money(cost) << "\n";
  if (degraded) out << "degraded: " << degraded_reason << "\n";
  if (!archive_imported.empty()) out << "archive: " << archive_imported << "\n";
  for (const auto& f : formats) {
    out << "\n[" << f.format << "]";
    if (f.init_failed) out << " init failed";
    else if (!f.init_done) out << " init incomplete";
    out << "\n";
    out << "  features " << f.features << ", generators " << f.generators << " (synthesized "
        << f.stats.generators_synthesized << ", failed " << f.stats.synthesis_failed << ")\n";
    out << "  mutations:";
    if (f.stats.mutations.empty()) out << " none";
    for (const auto& [kind, n] : f.stats.mutations) out << " " << kind << "=" << n;
    out << ", failed " << f.stats.mutation_failed << ", patterns " << f.patterns << ", stalls "
        << f.stats.stall_phases << "\n";
    out << "  seeds: harvested " << f.stats.seeds_harvested << ", injected " << f.stats.seeds_injected();
    for (const auto& [source, n] : f.stats.injected) out << " " << source << "=" << n;
    out << "\n  attribution:";
    for (auto c : kClasses) out << " " << seedforge::to_string(c) << "=" << f.stats.attribution[c];
    out << "\n";
  }
  if (!phase_seconds.empty()) {
    out << "\nwall clock:";
    for (const auto& [phase, secs] : phase_seconds) out << " " << phase << "=" << money(secs) << "s";
    out << "\n";
  }
  return out.str();
}

}  // namespace seedforge
