// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "seedforge/common/util.hpp"
#include "seedforge/fuzzer_bridge.hpp"

namespace seedforge {

/// Byte predicate guarding one edge of a simulated target.
///
/// JSON forms: {"contains": "text"}, {"contains_hex": "00ff"},
/// {"byte_eq": [offset, value]}, {"byte_ne": [offset, value]},
/// {"min_len": n}, {"all_of": [predicate, ...]}.
class BytePredicate {
 public:
  static BytePredicate from_json(const nlohmann::json& json);
  nlohmann::json to_json() const;
  bool matches(std::string_view input) const;

 private:
  enum class Kind { Contains, ByteEq, ByteNe, MinLen, AllOf };
  Kind kind_ = Kind::MinLen;
  std::string needle_;
  std::size_t offset_ = 0;
  std::uint8_t value_ = 0;
  std::vector<BytePredicate> children_;
};

struct EdgeRule {
  std::uint32_t id = 0;
  BytePredicate predicate;
};

/// Deterministic map from input bytes to the set of edge ids they exercise.
class SimTarget {
 public:
  /// {"edges": [{"id": 1, "when": predicate}, ...]}
  static SimTarget from_json(const nlohmann::json& json);
  nlohmann::json to_json() const;

  std::set<std::uint32_t> run(std::string_view input) const;
  std::size_t edge_count() const noexcept { return rules_.size(); }

 private:
  std::vector<EdgeRule> rules_;
};

struct SimQueueEntry {
  std::string name;
  std::string content;
};

/// Coverage-guided byte-mutation fuzzer over a SimTarget with a simulated
/// clock. Each execution advances the clock by `exec_seconds`.
///
/// Files appearing in the corpus directory are imported in name order; an
/// import that adds coverage joins the queue and is reported with an empty
/// source. Queue entries created by mutation are named "sim_<id6>" and
/// reported with the entry they were derived from.
class SimulatedFuzzer {
 public:
  static constexpr std::int64_t kEpoch = 1'700'000'000;

  SimulatedFuzzer(SimTarget target, std::filesystem::path corpus_dir, std::uint64_t seed,
                  double exec_seconds);

  /// Adds an initial seed: indexed as initial, queued unconditionally.
  void add_initial(const std::string& name, const std::string& content, ProvenanceIndex& index);

  /// Imports new corpus files, then performs up to `execs` executions.
  std::vector<NewFind> advance(std::uint64_t execs, ProvenanceIndex& index);

  CoverageSnapshot snapshot() const;
  std::int64_t now() const;
  const std::set<std::uint32_t>& covered() const noexcept { return covered_; }
  const std::vector<SimQueueEntry>& queue() const noexcept { return queue_; }
  std::uint64_t execs() const noexcept { return execs_; }

  nlohmann::json save() const;
  void load(const nlohmann::json& state);

 private:
  std::vector<NewFind> import_corpus(ProvenanceIndex& index);
  std::string mutate(const std::string& input);

  SimTarget target_;
  std::filesystem::path corpus_dir_;
  double exec_seconds_;
  Rng rng_;
  std::vector<SimQueueEntry> queue_;
  std::set<std::uint32_t> covered_;
  std::set<std::string> imported_;
  std::uint64_t execs_ = 0;
  std::uint64_t next_id_ = 0;
  std::size_t cursor_ = 0;
  std::int64_t last_find_ = kEpoch;
};

}  // namespace seedforge
