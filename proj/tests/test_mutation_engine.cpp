// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "seedforge/common/error.hpp"
#include "seedforge/common/util.hpp"
#include "seedforge/mutation_engine.hpp"
#include "test_support.hpp"

using namespace seedforge;
using llm::PromptKind;
using seedforge::testing::fenced;
using seedforge::testing::make_gateway;
using seedforge::testing::reply;
using seedforge::testing::TempDir;

namespace {

Generator root(const std::string& script, const std::string& format = "TIFF", const std::string& feature = "A") {
  return Generator{generator_id(script), format, script, {feature}, RootLineage{feature}, GeneratorStatus::Valid};
}

Generator child_of(const Generator& parent, const std::string& script, MutatorKind kind = MutatorKind::HavocFeature) {
  return Generator{generator_id(script), parent.format, script, parent.features, MutatedLineage{parent.id, kind},
                   GeneratorStatus::Valid};
}

SandboxConfig sh_sandbox(const std::filesystem::path& scratch) {
  SandboxConfig config;
  config.interpreter = {"sh"};
  config.script_name = "generator.sh";
  config.scratch_root = scratch;
  config.limits.timeout = std::chrono::seconds(5);
  return config;
}

std::string sh(const std::string& body) { return fenced(body, "sh"); }

struct Rig {
  explicit Rig(std::vector<llm::MockRecord> script) : gateway(make_gateway(std::move(script))) {}
  TempDir dir;
  Sandbox sandbox{sh_sandbox(dir.path() / "scratch")};
  GeneratorDB db;
  PatternDB patterns;
  DisabledInstaller installer;
  llm::Gateway gateway;
  GeneratorForge forge{gateway, sandbox, installer, db, {}};
  MutationEngine engine{forge, patterns};
};

}  // namespace

TEST(SelectGenerator, SingleCandidate) {
  GeneratorDB db;
  db.insert(root("g1"));
  Rng rng(3);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(select_generator(db, "TIFF", rng).script, "g1");
}

TEST(SelectGenerator, EmptyFormatThrows) {
  GeneratorDB db;
  db.insert(root("g1", "PDF"));
  Rng rng(3);
  try {
    select_generator(db, "TIFF", rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyDatabase);
  }
}

TEST(SelectGenerator, SkipsFailedGenerators) {
  GeneratorDB db;
  auto failed = root("bad");
  failed.status = GeneratorStatus::Failed;
  db.insert(failed);
  db.insert(root("good"));
  Rng rng(1);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(select_generator(db, "TIFF", rng).script, "good");
}

TEST(SelectGenerator, SeededSequencesRepeat) {
  GeneratorDB db;
  for (int i = 0; i < 5; ++i) db.insert(root("g" + std::to_string(i)));
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(select_generator(db, "TIFF", a).id, select_generator(db, "TIFF", b).id);
}

TEST(SelectGenerator, UniformOverThree) {
  GeneratorDB db;
  db.insert(root("g1"));
  db.insert(root("g2"));
  db.insert(root("g3"));
  Rng rng(2024);
  std::map<std::string, int> counts;
  for (int i = 0; i < 10000; ++i) ++counts[select_generator(db, "TIFF", rng).script];
  ASSERT_EQ(counts.size(), 3u);
  for (const auto& [script, n] : counts) {
    EXPECT_GE(n, 3100) << script;
    EXPECT_LE(n, 3500) << script;
  }
}

TEST(ChooseMutator, InitAlwaysRare) {
  PatternDB patterns;
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(choose_mutator(rng, patterns, "TIFF", MutationPhase::Init), MutatorKind::RareFeature);
  }
}

TEST(ChooseMutator, StallWithoutPatternsIsHavoc) {
  PatternDB patterns;
  Rng rng(5);
  std::set<MutatorKind> seen;
  for (int i = 0; i < 200; ++i) seen.insert(choose_mutator(rng, patterns, "TIFF", MutationPhase::Stall));
  EXPECT_EQ(seen, (std::set<MutatorKind>{MutatorKind::HavocFeature, MutatorKind::HavocStructure}));
}

TEST(ChooseMutator, StallWithPatternsCoversAllThree) {
  PatternDB patterns;
  patterns.record("TIFF", "a", "b");
  Rng rng(5);
  std::map<MutatorKind, int> counts;
  for (int i = 0; i < 3000; ++i) ++counts[choose_mutator(rng, patterns, "TIFF", MutationPhase::Stall)];
  ASSERT_EQ(counts.size(), 3u);
  EXPECT_EQ(counts.count(MutatorKind::RareFeature), 0u);
  for (const auto& [kind, n] : counts) EXPECT_NEAR(n, 1000, 150);
  // Patterns of another format do not count.
  for (int i = 0; i < 200; ++i) EXPECT_NE(choose_mutator(rng, patterns, "PDF", MutationPhase::Stall), MutatorKind::Pattern);
}

TEST(SelectPattern, SingleExampleAndEmpty) {
  PatternDB patterns;
  Rng rng(9);
  EXPECT_THROW(select_pattern(patterns, "TIFF", rng), Error);
  patterns.record("TIFF", "orig", "mut");
  EXPECT_EQ(select_pattern(patterns, "TIFF", rng).mutated_script, "mut");
}

TEST(MutateRare, FeatureSetIsUnion) {
  Rig rig({reply(PromptKind::RareFeatureMutation, sh("printf x > r.tiff"))});
  auto parent = root("printf a > a.tiff");
  rig.db.insert(parent);
  auto outcome = rig.engine.mutate_rare(parent, Feature{"Tiled storage", "tiles", "TIFF", FeatureOrigin::Rare});
  ASSERT_TRUE(std::holds_alternative<MutatedGenerator>(outcome));
  const auto& child = std::get<MutatedGenerator>(outcome).generator;
  EXPECT_EQ(child.features, (std::set<std::string>{"A", "Tiled storage"}));
  EXPECT_EQ(child.lineage, Lineage(MutatedLineage{parent.id, MutatorKind::RareFeature}));
  EXPECT_EQ(rig.db.size(), 2u);
  auto prompt = rig.gateway.transcript().back().prompt;
  EXPECT_NE(prompt.find("printf a > a.tiff"), std::string::npos);
  EXPECT_NE(prompt.find("Tiled storage"), std::string::npos);
}

TEST(MutateHavoc, ChainOfThreeHasDepthThree) {
  Rig rig({reply(PromptKind::HavocMutation, sh("printf 1 > h.tiff")),
           reply(PromptKind::HavocMutation, sh("printf 2 > h.tiff")),
           reply(PromptKind::HavocMutation, sh("printf 3 > h.tiff"))});
  auto current = root("printf 0 > a.tiff");
  rig.db.insert(current);
  for (int i = 0; i < 3; ++i) {
    auto outcome = rig.engine.mutate_havoc(current, HavocAxis::Feature);
    ASSERT_TRUE(std::holds_alternative<MutatedGenerator>(outcome));
    current = std::get<MutatedGenerator>(outcome).generator;
  }
  EXPECT_EQ(rig.db.lineage_depth(current.id), 3u);
  EXPECT_EQ(current.features, (std::set<std::string>{"A", "havoc:1", "havoc:2", "havoc:3"}));
}

TEST(MutateHavoc, StructureAxisNamedInPrompt) {
  Rig rig({reply(PromptKind::HavocMutation, sh("printf s > s.tiff"))});
  auto parent = root("printf 0 > a.tiff");
  rig.db.insert(parent);
  auto outcome = rig.engine.mutate_havoc(parent, HavocAxis::Structure);
  ASSERT_TRUE(std::holds_alternative<MutatedGenerator>(outcome));
  EXPECT_EQ(std::get<MutatedGenerator>(outcome).generator.lineage,
            Lineage(MutatedLineage{parent.id, MutatorKind::HavocStructure}));
  EXPECT_NE(rig.gateway.transcript().back().prompt.find("structure"), std::string::npos);
}

TEST(MutateHavoc, FailedChildIsNotStored) {
  std::vector<llm::MockRecord> script{reply(PromptKind::HavocMutation, sh("exit 1"))};
  for (int i = 0; i < 3; ++i) script.push_back(reply(PromptKind::Regenerate, sh("exit 1")));
  Rig rig(script);
  auto parent = root("printf 0 > a.tiff");
  rig.db.insert(parent);
  auto outcome = rig.engine.mutate_havoc(parent, HavocAxis::Feature);
  ASSERT_TRUE(std::holds_alternative<Failure>(outcome));
  EXPECT_EQ(rig.db.size(), 1u);
  EXPECT_EQ(rig.gateway.completions(), 4u);
}

TEST(MutatePattern, ExampleEmbeddedInPrompt) {
  Rig rig({reply(PromptKind::PatternMutation, sh("printf p > p.tiff"))});
  auto parent = root("printf 0 > a.tiff");
  rig.db.insert(parent);
  rig.patterns.record("TIFF", "ORIGINAL_EXAMPLE", "MUTATED_EXAMPLE");
  Rng rng(1);
  const auto& example = select_pattern(rig.patterns, "TIFF", rng);
  auto outcome = rig.engine.mutate_pattern(parent, example);
  ASSERT_TRUE(std::holds_alternative<MutatedGenerator>(outcome));
  auto prompt = rig.gateway.transcript().back().prompt;
  EXPECT_NE(prompt.find("ORIGINAL_EXAMPLE"), std::string::npos);
  EXPECT_NE(prompt.find("MUTATED_EXAMPLE"), std::string::npos);
  EXPECT_EQ(std::get<MutatedGenerator>(outcome).generator.lineage,
            Lineage(MutatedLineage{parent.id, MutatorKind::Pattern}));
}

TEST(MutatePattern, ForeignFormatRejected) {
  Rig rig({});
  auto parent = root("x");
  rig.db.insert(parent);
  MutationPattern foreign{"a", "b", "PDF", 1};
  EXPECT_THROW(rig.engine.mutate_pattern(parent, foreign), Error);
}

TEST(RecordUsefulMutation, DedupAndHitCount) {
  Rig rig({});
  auto parent = root("orig");
  auto child = child_of(parent, "mut");
  EXPECT_TRUE(rig.engine.record_useful_mutation(parent, child));
  EXPECT_TRUE(rig.engine.record_useful_mutation(parent, child));
  ASSERT_EQ(rig.patterns.patterns("TIFF").size(), 1u);
  EXPECT_EQ(rig.patterns.patterns("TIFF")[0].hit_count, 2u);
}

TEST(RecordUsefulMutation, RootIsIgnored) {
  Rig rig({});
  auto parent = root("orig");
  EXPECT_FALSE(rig.engine.record_useful_mutation(parent, root("other")));
  EXPECT_TRUE(rig.patterns.empty("TIFF"));
}

TEST(RecordUsefulMutation, WrongParentThrows) {
  Rig rig({});
  auto parent = root("orig");
  auto child = child_of(root("elsewhere"), "mut");
  try {
    rig.engine.record_useful_mutation(parent, child);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LineageMismatch);
  }
}

TEST(PatternDB, SaveLoadRoundTrip) {
  TempDir dir;
  PatternDB patterns;
  patterns.record("TIFF", "a\nb", "c\td");
  patterns.record("TIFF", "a\nb", "c\td");
  patterns.record("PDF", "x", "y");
  patterns.save(dir / "p.jsonl");
  EXPECT_EQ(PatternDB::load(dir / "p.jsonl"), patterns);
  EXPECT_EQ(PatternDB::load(dir / "p.jsonl").size(), 2u);
}
