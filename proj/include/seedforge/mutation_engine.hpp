// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "seedforge/common/util.hpp"
#include "seedforge/feature_catalog.hpp"
#include "seedforge/generator_forge.hpp"

namespace seedforge {

/// An (original, mutated) script pair whose mutated side produced a seed that
/// found new coverage.
struct MutationPattern {
  std::string original_script;
  std::string mutated_script;
  std::string format;
  std::uint64_t hit_count = 1;

  bool operator==(const MutationPattern&) const = default;
};

/// Append-only per-format store of useful mutation pairs.
class PatternDB {
 public:
  /// Appends the pair, or bumps hit_count when it is already stored. Returns
  /// true when a new pattern was appended.
  bool record(const std::string& format, const std::string& original, const std::string& mutated);

  const std::vector<MutationPattern>& patterns(std::string_view format) const;
  bool empty(std::string_view format) const { return patterns(format).empty(); }
  std::size_t size() const;

  void save(const std::filesystem::path& file) const;
  static PatternDB load(const std::filesystem::path& file);

  bool operator==(const PatternDB&) const = default;

 private:
  std::map<std::string, std::vector<MutationPattern>, std::less<>> by_format_;
};

enum class MutationPhase { Init, Stall };

enum class HavocAxis { Feature, Structure };

std::string_view to_string(HavocAxis axis) noexcept;

/// Uniform choice over the valid generators of `format`. Throws EmptyDatabase.
const Generator& select_generator(const GeneratorDB& db, std::string_view format, Rng& rng);

/// Init: rare_feature. Stall: uniform over havoc_feature, havoc_structure and,
/// when the format has recorded patterns, pattern.
MutatorKind choose_mutator(Rng& rng, const PatternDB& patterns, std::string_view format, MutationPhase phase);

/// Uniform choice of an in-context example. Throws EmptyDatabase.
const MutationPattern& select_pattern(const PatternDB& patterns, std::string_view format, Rng& rng);

struct MutatedGenerator {
  Generator generator;
  ExecutionResult execution;  // successful run, workdir still on disk
  bool inserted = false;
};

/// LLM-driven generator mutation. Mutated scripts are debugged with the same
/// bounded loop as synthesis and stored only once they run successfully.
class MutationEngine {
 public:
  MutationEngine(GeneratorForge& forge, PatternDB& patterns) : forge_(forge), patterns_(patterns) {}

  Outcome<MutatedGenerator> mutate_rare(const Generator& generator, const Feature& rare_feature);
  Outcome<MutatedGenerator> mutate_havoc(const Generator& generator, HavocAxis axis);
  Outcome<MutatedGenerator> mutate_pattern(const Generator& generator, const MutationPattern& example);

  /// Records (original, mutated) after a new-path attribution. Root-lineage
  /// generators are ignored (returns false). Throws LineageMismatch when
  /// `mutated` does not descend directly from `original`.
  bool record_useful_mutation(const Generator& original, const Generator& mutated);

  PatternDB& patterns() noexcept { return patterns_; }

 private:
  Outcome<MutatedGenerator> run_mutation(const Generator& parent, llm::PromptKind prompt_kind,
                                         const llm::Bindings& bindings, MutatorKind kind,
                                         std::set<std::string> features);
  std::size_t next_marker(const Generator& parent, std::string_view prefix) const;

  GeneratorForge& forge_;
  PatternDB& patterns_;
};

}  // namespace seedforge
