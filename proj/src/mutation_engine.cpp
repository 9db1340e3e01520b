// SPDX-License-Identifier: Apache-2.0

#include "seedforge/mutation_engine.hpp"

#include <nlohmann/json.hpp>

#include "seedforge/common/error.hpp"

namespace seedforge {

std::string_view to_string(HavocAxis axis) noexcept {
  return axis == HavocAxis::Feature ? "feature" : "structure";
}

bool PatternDB::record(const std::string& format, const std::string& original, const std::string& mutated) {
  auto& list = by_format_[format];
  for (auto& pattern : list) {
    if (pattern.original_script == original && pattern.mutated_script == mutated) {
      ++pattern.hit_count;
      return false;
    }
  }
  list.push_back(MutationPattern{original, mutated, format, 1});
  return true;
}

const std::vector<MutationPattern>& PatternDB::patterns(std::string_view format) const {
  static const std::vector<MutationPattern> kEmpty;
  auto it = by_format_.find(format);
  return it == by_format_.end() ? kEmpty : it->second;
}

std::size_t PatternDB::size() const {
  std::size_t total = 0;
  for (const auto& [format, list] : by_format_) total += list.size();
  return total;
}

void PatternDB::save(const std::filesystem::path& file) const {
  std::string out;
  for (const auto& [format, list] : by_format_) {
    for (const auto& p : list) {
      out += nlohmann::json{{"format", p.format},
                            {"original", p.original_script},
                            {"mutated", p.mutated_script},
                            {"hits", p.hit_count}}
                 .dump();
      out += '\n';
    }
  }
  write_file_atomic(file, out);
}

PatternDB PatternDB::load(const std::filesystem::path& file) {
  PatternDB db;
  if (!std::filesystem::exists(file)) return db;
  try {
    for (const auto& line : split_lines(read_file(file))) {
      if (line.empty()) continue;
      auto json = nlohmann::json::parse(line);
      MutationPattern p{json.at("original").get<std::string>(), json.at("mutated").get<std::string>(),
                        json.at("format").get<std::string>(), json.at("hits").get<std::uint64_t>()};
      db.by_format_[p.format].push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptState, std::string("pattern db: ") + e.what());
  }
  return db;
}

const Generator& select_generator(const GeneratorDB& db, std::string_view format, Rng& rng) {
  auto candidates = db.valid(format);
  if (candidates.empty()) throw Error(ErrorKind::EmptyDatabase, "no valid generator for " + std::string(format));
  return *candidates[rng.index(candidates.size())];
}

MutatorKind choose_mutator(Rng& rng, const PatternDB& patterns, std::string_view format, MutationPhase phase) {
  if (phase == MutationPhase::Init) return MutatorKind::RareFeature;
  if (patterns.empty(format)) {
    return rng.index(2) == 0 ? MutatorKind::HavocFeature : MutatorKind::HavocStructure;
  }
  static constexpr MutatorKind kStall[] = {MutatorKind::HavocFeature, MutatorKind::HavocStructure,
                                           MutatorKind::Pattern};
  return kStall[rng.index(3)];
}

const MutationPattern& select_pattern(const PatternDB& patterns, std::string_view format, Rng& rng) {
  const auto& list = patterns.patterns(format);
  if (list.empty()) throw Error(ErrorKind::EmptyDatabase, "no mutation pattern for " + std::string(format));
  return list[rng.index(list.size())];
}

std::size_t MutationEngine::next_marker(const Generator& parent, std::string_view prefix) const {
  // Markers count up along the lineage so a chain of mutations stays distinct.
  std::size_t highest = 0;
  for (const auto& name : parent.features) {
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    try {
      highest = std::max<std::size_t>(highest, std::stoul(name.substr(prefix.size())));
    } catch (const std::exception&) {
    }
  }
  return highest + 1;
}

Outcome<MutatedGenerator> MutationEngine::run_mutation(const Generator& parent, llm::PromptKind prompt_kind,
                                                       const llm::Bindings& bindings, MutatorKind kind,
                                                       std::set<std::string> features) {
  llm::Dialogue dialogue(prompt_kind, forge_.gateway().render(prompt_kind, bindings));
  std::string script;
  auto first = forge_.request_and_run(dialogue, script);
  auto outcome = forge_.self_debug(dialogue, std::move(script), std::move(first));
  if (auto* failure = std::get_if<Failure>(&outcome)) return *failure;

  auto& forged = std::get<ForgedScript>(outcome);
  Generator child;
  child.id = generator_id(forged.script);
  child.format = parent.format;
  child.script = std::move(forged.script);
  child.features = std::move(features);
  child.lineage = MutatedLineage{parent.id, kind};
  child.status = GeneratorStatus::Valid;
  bool inserted = forge_.db().insert(child);
  if (!inserted) child = *forge_.db().find(child.id);
  return MutatedGenerator{std::move(child), std::move(forged.execution), inserted};
}

Outcome<MutatedGenerator> MutationEngine::mutate_rare(const Generator& generator, const Feature& rare_feature) {
  auto features = generator.features;
  features.insert(rare_feature.name);
  return run_mutation(generator, llm::PromptKind::RareFeatureMutation,
                      {{"format", generator.format},
                       {"generator", generator.script},
                       {"feature", rare_feature.label()}},
                      MutatorKind::RareFeature, std::move(features));
}

Outcome<MutatedGenerator> MutationEngine::mutate_havoc(const Generator& generator, HavocAxis axis) {
  auto features = generator.features;
  features.insert("havoc:" + std::to_string(next_marker(generator, "havoc:")));
  return run_mutation(generator, llm::PromptKind::HavocMutation,
                      {{"format", generator.format},
                       {"generator", generator.script},
                       {"axis", std::string(to_string(axis))}},
                      axis == HavocAxis::Feature ? MutatorKind::HavocFeature : MutatorKind::HavocStructure,
                      std::move(features));
}

Outcome<MutatedGenerator> MutationEngine::mutate_pattern(const Generator& generator,
                                                         const MutationPattern& example) {
  if (example.format != generator.format) {
    throw Error(ErrorKind::LineageMismatch, "pattern example belongs to another format");
  }
  auto features = generator.features;
  features.insert("pattern:" + std::to_string(next_marker(generator, "pattern:")));
  return run_mutation(generator, llm::PromptKind::PatternMutation,
                      {{"format", generator.format},
                       {"generator", generator.script},
                       {"original", example.original_script},
                       {"mutated", example.mutated_script}},
                      MutatorKind::Pattern, std::move(features));
}

bool MutationEngine::record_useful_mutation(const Generator& original, const Generator& mutated) {
  const auto* link = std::get_if<MutatedLineage>(&mutated.lineage);
  if (link == nullptr) return false;
  if (link->parent_id != original.id) {
    throw Error(ErrorKind::LineageMismatch, "generator " + mutated.id.substr(0, 16) +
                                                " does not descend from " + original.id.substr(0, 16));
  }
  if (original.script == mutated.script) return false;
  patterns_.record(mutated.format, original.script, mutated.script);
  return true;
}

}  // namespace seedforge
