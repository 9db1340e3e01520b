// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "seedforge/script_sandbox.hpp"

namespace seedforge {

struct CoverageSnapshot {
  std::uint64_t edges_found = 0;
  std::uint64_t execs_done = 0;
  std::int64_t last_find_unix = 0;
  std::uint64_t queue_size = 0;

  bool operator==(const CoverageSnapshot&) const = default;
};

/// Stats-file key names. Defaults follow AFL++'s fuzzer_stats.
struct StatsKeyMap {
  std::string edges_found = "edges_found";
  std::string execs_done = "execs_done";
  std::string last_find = "last_find";
  std::string queue_size = "corpus_count";
  /// Used in place of last_find while the fuzzer has not found anything yet
  /// (AFL++ reports last_find as 0 then). Optional in the input.
  std::string start_time = "start_time";

  bool operator==(const StatsKeyMap&) const = default;
};

/// Parses `key : value` lines. Unknown keys are ignored. Throws MalformedStats
/// when a required key is missing or not a number.
CoverageSnapshot parse_stats(std::string_view stats_text, const StatsKeyMap& keys = {});

enum class FuzzState { Init, Progress, Stall };

std::string_view to_string(FuzzState state) noexcept;

/// Init on the first poll; Stall once nothing was found for longer than the
/// threshold; Progress otherwise. Pure.
FuzzState poll_state(const CoverageSnapshot& snapshot, std::int64_t now_unix,
                     std::int64_t stall_threshold_secs, bool first_poll);

enum class ProvenanceClass { Initial, Synthesis, Mutation, Fuzzer };

/// Attribution buckets; `Unknown` is the fuzzer-origin-unknown fallback.
enum class AttributionClass { Initial, Synthesis, Mutation, Unknown };

std::string_view to_string(ProvenanceClass c) noexcept;
std::string_view to_string(AttributionClass c) noexcept;

struct ProvenanceEntry {
  ProvenanceClass origin = ProvenanceClass::Fuzzer;
  std::string generator_id;  // synthesis / mutation
  std::string parent;        // fuzzer-created entries: the entry they were mutated from
  std::string content_hash;  // sha256 of the bytes, when known

  bool operator==(const ProvenanceEntry&) const = default;
};

/// Corpus filename to origin. Every filename maps once.
class ProvenanceIndex {
 public:
  /// False when the filename is already indexed (nothing changes).
  bool add(const std::string& filename, ProvenanceEntry entry);
  const ProvenanceEntry* find(std::string_view filename) const;
  /// Filename of an injected or initial entry with these bytes, if any.
  const std::string* find_content(std::string_view content_hash) const;
  std::size_t size() const noexcept { return entries_.size(); }
  const std::map<std::string, ProvenanceEntry, std::less<>>& entries() const noexcept { return entries_; }

  std::string serialize() const;
  static ProvenanceIndex parse(std::string_view text);

  bool operator==(const ProvenanceIndex& other) const { return entries_ == other.entries_; }

 private:
  std::map<std::string, ProvenanceEntry, std::less<>> entries_;
  std::map<std::string, std::string, std::less<>> by_content_;
};

struct CorpusName {
  std::string generator_id16;
  std::size_t ordinal = 0;
  std::string hash8;
  std::string suffix;

  bool operator==(const CorpusName&) const = default;
};

/// "gen_<id16>_<ord>_<hash8>.<suffix>"
std::string make_corpus_name(const CorpusName& name);
std::optional<CorpusName> parse_corpus_name(std::string_view filename);

/// Writes each new seed of `batch` into `corpus_dir` under a provenance-encoding
/// name and indexes it. Seeds whose bytes are already indexed are skipped.
/// Returns the filenames written. Throws IoError.
std::vector<std::string> inject(const SeedBatch& batch, const std::filesystem::path& corpus_dir,
                                ProvenanceIndex& index);

/// A corpus entry credited with new coverage, and the entry it came from
/// (empty when it was imported rather than mutated).
struct NewFind {
  std::string entry;
  std::string source;

  bool operator==(const NewFind&) const = default;
};

struct AttributionCounts {
  std::map<AttributionClass, std::uint64_t> counts;

  std::uint64_t operator[](AttributionClass c) const;
  std::uint64_t total() const;
  AttributionCounts& operator+=(const AttributionCounts& other);
  bool operator==(const AttributionCounts&) const = default;
};

inline constexpr std::size_t kMaxProvenanceDepth = 64;

/// Resolves one entry to its originating class by following fuzzer parents.
/// Fills `generator_id` for synthesis/mutation results.
AttributionClass resolve_provenance(const ProvenanceIndex& index, std::string_view entry,
                                    std::string* generator_id = nullptr);

/// Counts each find under the class of its origin. Mutation-class finds call
/// `on_mutation_hit(generator_id)`. Never throws for unknown entries.
AttributionCounts attribute(const std::vector<NewFind>& report, const ProvenanceIndex& index,
                            const std::function<void(const std::string&)>& on_mutation_hit = {});

/// Fields of an AFL++ queue filename such as "id:000012,src:000003,op:havoc,+cov".
struct AflQueueName {
  std::uint64_t id = 0;
  std::optional<std::uint64_t> source;
  bool new_coverage = false;
  std::string orig;
};

std::optional<AflQueueName> parse_afl_queue_name(std::string_view filename);

/// Incrementally scans an AFL++ queue directory. Entries whose bytes match an
/// injected seed inherit its provenance, "orig:" entries without a match are
/// initial inputs, and the rest are indexed as fuzzer-created with their src
/// entry as parent. Entries flagged +cov are reported.
class AflQueueWatcher {
 public:
  explicit AflQueueWatcher(std::filesystem::path queue_dir) : queue_dir_(std::move(queue_dir)) {}

  std::vector<NewFind> scan(ProvenanceIndex& index);

  /// Queue ids already seen, for resuming without re-reporting.
  const std::map<std::uint64_t, std::string>& known() const noexcept { return by_id_; }
  void restore(std::map<std::uint64_t, std::string> known) { by_id_ = std::move(known); }

 private:
  std::filesystem::path queue_dir_;
  std::map<std::uint64_t, std::string> by_id_;
};

}  // namespace seedforge
