// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <cstdio>

#include "seedforge/campaign.hpp"
#include "seedforge/common/error.hpp"

namespace seedforge {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t FormatStats::seeds_injected() const {
  std::uint64_t total = 0;
  for (const auto& [source, n] : injected) total += n;
  return total;
}

namespace {

constexpr const char* kFiles[] = {"features.tsv", "generators.jsonl", "patterns.jsonl",
                                  "provenance.jsonl", "ledger.json", "campaign.json"};

std::string sequence_name(std::uint64_t seq) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%08llu", static_cast<unsigned long long>(seq));
  return buf;
}

json attribution_to_json(const AttributionCounts& counts) {
  json j = json::object();
  for (const auto& [cls, n] : counts.counts) j[std::string(to_string(cls))] = n;
  return j;
}

AttributionCounts attribution_from_json(const json& j) {
  AttributionCounts counts;
  for (auto cls : {AttributionClass::Initial, AttributionClass::Synthesis, AttributionClass::Mutation,
                   AttributionClass::Unknown}) {
    auto key = std::string(to_string(cls));
    if (j.contains(key)) counts.counts[cls] = j.at(key).get<std::uint64_t>();
  }
  return counts;
}

json progress_to_json(const FormatProgress& p) {
  return {{"analyzed", p.analyzed},   {"features", p.features},
          {"synthesized", p.synthesized}, {"rare_discovered", p.rare_discovered},
          {"rare", p.rare},           {"rare_done", p.rare_done},
          {"init_done", p.init_done}, {"init_failed", p.init_failed}};
}

FormatProgress progress_from_json(const json& j) {
  FormatProgress p;
  p.analyzed = j.at("analyzed").get<bool>();
  p.features = j.at("features").get<std::vector<std::string>>();
  p.synthesized = j.at("synthesized").get<std::map<std::string, std::string>>();
  p.rare_discovered = j.at("rare_discovered").get<bool>();
  p.rare = j.at("rare").get<std::vector<std::string>>();
  p.rare_done = j.at("rare_done").get<std::map<std::string, std::string>>();
  p.init_done = j.at("init_done").get<bool>();
  p.init_failed = j.at("init_failed").get<bool>();
  return p;
}

json stats_to_json(const FormatStats& s) {
  return {{"generators_synthesized", s.generators_synthesized},
          {"synthesis_failed", s.synthesis_failed},
          {"mutations", s.mutations},
          {"mutation_failed", s.mutation_failed},
          {"seeds_harvested", s.seeds_harvested},
          {"injected", s.injected},
          {"attribution", attribution_to_json(s.attribution)},
          {"stall_phases", s.stall_phases}};
}

FormatStats stats_from_json(const json& j) {
  FormatStats s;
  s.generators_synthesized = j.at("generators_synthesized").get<std::uint64_t>();
  s.synthesis_failed = j.at("synthesis_failed").get<std::uint64_t>();
  s.mutations = j.at("mutations").get<std::map<std::string, std::uint64_t>>();
  s.mutation_failed = j.at("mutation_failed").get<std::uint64_t>();
  s.seeds_harvested = j.at("seeds_harvested").get<std::uint64_t>();
  s.injected = j.at("injected").get<std::map<std::string, std::uint64_t>>();
  s.attribution = attribution_from_json(j.at("attribution"));
  s.stall_phases = j.at("stall_phases").get<std::uint64_t>();
  return s;
}

json campaign_to_json(const CampaignState& s) {
  json progress = json::object();
  for (const auto& [f, p] : s.progress) progress[f] = progress_to_json(p);
  json stats = json::object();
  for (const auto& [f, st] : s.stats) stats[f] = stats_to_json(st);
  json pending = nullptr;
  if (s.pending_stall) pending = {{"format", s.pending_stall->format}, {"remaining", s.pending_stall->remaining}};
  return {{"sequence", s.sequence},
          {"progress", progress},
          {"stats", stats},
          {"attribution", attribution_to_json(s.attribution)},
          {"new_finds", s.new_finds},
          {"llm_calls", s.llm_calls},
          {"degraded", s.degraded},
          {"degraded_reason", s.degraded_reason},
          {"init_polled", s.init_polled},
          {"last_stall_at", s.last_stall_at},
          {"next_stall_format", s.next_stall_format},
          {"pending_stall", pending},
          {"rng", s.rng_state},
          {"backend", s.backend_state},
          {"fuzzer", s.fuzzer_state},
          {"coverage",
           {{"edges_found", s.coverage.edges_found},
            {"execs_done", s.coverage.execs_done},
            {"last_find", s.coverage.last_find_unix},
            {"queue_size", s.coverage.queue_size}}},
          {"phase_seconds", s.phase_seconds},
          {"archive_imported", s.archive_imported}};
}

void campaign_from_json(const json& j, CampaignState& s) {
  s.sequence = j.at("sequence").get<std::uint64_t>();
  for (const auto& [f, p] : j.at("progress").items()) s.progress[f] = progress_from_json(p);
  for (const auto& [f, st] : j.at("stats").items()) s.stats[f] = stats_from_json(st);
  s.attribution = attribution_from_json(j.at("attribution"));
  s.new_finds = j.at("new_finds").get<std::uint64_t>();
  s.llm_calls = j.at("llm_calls").get<std::uint64_t>();
  s.degraded = j.at("degraded").get<bool>();
  s.degraded_reason = j.at("degraded_reason").get<std::string>();
  s.init_polled = j.at("init_polled").get<bool>();
  s.last_stall_at = j.at("last_stall_at").get<std::int64_t>();
  s.next_stall_format = j.at("next_stall_format").get<std::size_t>();
  const auto& pending = j.at("pending_stall");
  if (!pending.is_null()) {
    s.pending_stall = PendingStall{pending.at("format").get<std::string>(), pending.at("remaining").get<std::size_t>()};
  }
  s.rng_state = j.at("rng").get<std::string>();
  s.backend_state = j.at("backend");
  s.fuzzer_state = j.at("fuzzer");
  const auto& cov = j.at("coverage");
  s.coverage = CoverageSnapshot{cov.at("edges_found").get<std::uint64_t>(), cov.at("execs_done").get<std::uint64_t>(),
                                cov.at("last_find").get<std::int64_t>(), cov.at("queue_size").get<std::uint64_t>()};
  s.phase_seconds = j.at("phase_seconds").get<std::map<std::string, double>>();
  s.archive_imported = j.at("archive_imported").get<std::string>();
}

std::optional<std::uint64_t> current_sequence(const fs::path& state_dir) {
  const auto current = state_dir / "CURRENT";
  if (!fs::exists(current)) return std::nullopt;
  auto text = trim(read_file(current));
  std::uint64_t seq = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), seq);
  if (ec != std::errc{} || ptr != text.data() + text.size() || seq == 0) {
    throw Error(ErrorKind::CorruptState, "CURRENT does not name a checkpoint");
  }
  return seq;
}

}  // namespace

void persist_state(CampaignState& state, const fs::path& state_dir, std::string_view script_extension) {
  const auto checkpoints = state_dir / "checkpoints";
  fs::create_directories(checkpoints);
  fs::create_directories(state_dir / "generators");
  const auto previous = current_sequence(state_dir);
  state.sequence = std::max(state.sequence, previous.value_or(0)) + 1;
  const auto dir = checkpoints / sequence_name(state.sequence);
  fs::remove_all(dir);
  fs::create_directories(dir);

  write_file_atomic(dir / "features.tsv", state.features.serialize());
  state.generators.save(dir / "generators.jsonl", state_dir / "generators", script_extension);
  state.patterns.save(dir / "patterns.jsonl");
  fault_point("state.persist");
  write_file_atomic(dir / "provenance.jsonl", state.provenance.serialize());
  write_file_atomic(dir / "ledger.json", state.ledger.to_json().dump(1));
  write_file_atomic(dir / "campaign.json", campaign_to_json(state).dump(1));

  std::string manifest;
  for (const char* name : kFiles) manifest += sha256_hex(read_file(dir / name)) + "  " + name + "\n";
  write_file_atomic(dir / "MANIFEST", manifest);
  fault_point("state.manifest");
  write_file_atomic(state_dir / "CURRENT", sequence_name(state.sequence) + "\n");
  fault_point("state.current");

  // Keep the new generation and the one before it.
  for (const auto& entry : fs::directory_iterator(checkpoints)) {
    const auto name = entry.path().filename().string();
    if (name != sequence_name(state.sequence) && (!previous || name != sequence_name(*previous))) {
      fs::remove_all(entry.path());
    }
  }
}

CampaignState load_state(const fs::path& state_dir, std::string_view script_extension) {
  CampaignState state;
  const auto seq = current_sequence(state_dir);
  if (!seq) return state;
  const auto dir = state_dir / "checkpoints" / sequence_name(*seq);
  if (!fs::is_directory(dir) || !fs::exists(dir / "MANIFEST")) {
    throw Error(ErrorKind::CorruptState, "checkpoint " + sequence_name(*seq) + " is missing");
  }

  std::map<std::string, std::string> expected;
  for (const auto& line : split_lines(read_file(dir / "MANIFEST"))) {
    auto sep = line.find("  ");
    if (sep == std::string::npos) continue;
    expected[line.substr(sep + 2)] = line.substr(0, sep);
  }
  for (const char* name : kFiles) {
    auto it = expected.find(name);
    if (it == expected.end() || !fs::exists(dir / name) || sha256_hex(read_file(dir / name)) != it->second) {
      throw Error(ErrorKind::CorruptState, std::string("checksum mismatch for ") + name);
    }
  }

  try {
    state.features = FeatureDB::parse(read_file(dir / "features.tsv"));
    state.generators = GeneratorDB::load(dir / "generators.jsonl", state_dir / "generators", script_extension);
    state.patterns = PatternDB::load(dir / "patterns.jsonl");
    state.provenance = ProvenanceIndex::parse(read_file(dir / "provenance.jsonl"));
    state.ledger = llm::UsageLedger::from_json(json::parse(read_file(dir / "ledger.json")));
    campaign_from_json(json::parse(read_file(dir / "campaign.json")), state);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptState, std::string("checkpoint: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::CorruptState) throw;
    throw Error(ErrorKind::CorruptState, e.what());
  }
  return state;
}

}  // namespace seedforge
