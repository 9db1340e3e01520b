// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "seedforge/common/error.hpp"
#include "seedforge/generator_forge.hpp"
#include "seedforge/common/util.hpp"
#include "test_support.hpp"

using namespace seedforge;
using llm::PromptKind;
using seedforge::testing::fenced;
using seedforge::testing::make_gateway;
using seedforge::testing::mock_of;
using seedforge::testing::reply;
using seedforge::testing::StubInstaller;
using seedforge::testing::TempDir;

namespace {

const std::string kGood = fenced("open('out.tiff', 'wb').write(b'II*\\x00')");
const std::string kBad = fenced("raise ValueError('broken')");
const Feature kFeature{"Lossless compression", "LZW", "TIFF"};

struct Rig {
  TempDir dir;
  Sandbox sandbox{seedforge::testing::python_sandbox(dir.path() / "scratch")};
  GeneratorDB db;
};

/// Installer that makes the package importable by dropping a module file on
/// the sandbox's PYTHONPATH.
class ModuleDropInstaller final : public PackageInstaller {
 public:
  explicit ModuleDropInstaller(std::filesystem::path dir) : dir_(std::move(dir)) {}
  bool install(const std::string& package) override {
    ++calls;
    write_file_atomic(dir_ / (package + ".py"), "VALUE = 1\n");
    return true;
  }
  int calls = 0;

 private:
  std::filesystem::path dir_;
};

/// Backend that answers every prompt with a random choice among working,
/// broken and missing-module scripts.
class AdversarialBackend final : public llm::ChatBackend {
 public:
  explicit AdversarialBackend(std::uint64_t seed) : rng_(seed) {}
  llm::Completion complete(const llm::Dialogue& dialogue, const llm::Decoding&) override {
    ++calls;
    static const std::string kReplies[] = {kBad, kBad, fenced("import seedforge_adv_missing"), kGood, "no code here",
                                           ""};
    std::string text;
    if (dialogue.last_user_kind() == PromptKind::ExtractLibrary) {
      text = rng_() % 4 == 0 ? "" : "seedforge_adv_missing";
    } else {
      text = kReplies[rng_() % (rng_() % 5 == 0 ? 6 : 3)];
    }
    return llm::Completion{text, 10, 10, "mock"};
  }
  std::string model_id() const override { return "mock"; }
  int calls = 0;

 private:
  std::mt19937_64 rng_;
};

class CoinInstaller final : public PackageInstaller {
 public:
  explicit CoinInstaller(std::uint64_t seed) : rng_(seed) {}
  bool install(const std::string&) override { return rng_() % 3 != 0; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

TEST(Synthesize, FirstAttemptSucceeds) {
  Rig rig;
  auto gw = make_gateway({reply(PromptKind::CreateGenerator, kGood)});
  DisabledInstaller installer;
  GeneratorForge forge(gw, rig.sandbox, installer, rig.db, {});
  auto outcome = forge.synthesize("TIFF", kFeature);
  ASSERT_TRUE(std::holds_alternative<ForgedGenerator>(outcome));
  const auto& forged = std::get<ForgedGenerator>(outcome);
  EXPECT_EQ(gw.completions(), 1u);
  EXPECT_TRUE(forged.inserted);
  EXPECT_EQ(forged.generator.id, generator_id(forged.generator.script));
  EXPECT_EQ(forged.generator.features, std::set<std::string>{"Lossless compression"});
  EXPECT_TRUE(forged.generator.is_root());
  EXPECT_TRUE(forged.execution.ok());
  EXPECT_EQ(rig.db.size(), 1u);
}

TEST(Synthesize, AlwaysFailingScriptsUseEightCompletions) {
  Rig rig;
  std::vector<llm::MockRecord> script;
  for (int attempt = 0; attempt < 2; ++attempt) {
    script.push_back(reply(PromptKind::CreateGenerator, kBad));
    for (int round = 0; round < 3; ++round) script.push_back(reply(PromptKind::Regenerate, kBad));
  }
  auto gw = make_gateway(script);
  DisabledInstaller installer;
  GeneratorForge forge(gw, rig.sandbox, installer, rig.db, {});
  auto outcome = forge.synthesize("TIFF", kFeature);
  ASSERT_TRUE(std::holds_alternative<Failure>(outcome));
  EXPECT_EQ(std::get<Failure>(outcome).kind, FailureKind::ExhaustedBudget);
  EXPECT_EQ(gw.completions(), 8u);
  EXPECT_EQ(rig.db.size(), 0u);
}

TEST(Synthesize, RejectedInstallStopsWithoutRegeneration) {
  Rig rig;
  auto gw = make_gateway({reply(PromptKind::CreateGenerator, fenced("import seedforge_rejected_pkg")),
                          reply(PromptKind::ExtractLibrary, "seedforge_rejected_pkg")});
  StubInstaller installer(false);
  GeneratorForge forge(gw, rig.sandbox, installer, rig.db, {});
  auto outcome = forge.synthesize("TIFF", kFeature);
  ASSERT_TRUE(std::holds_alternative<Failure>(outcome));
  EXPECT_EQ(std::get<Failure>(outcome).kind, FailureKind::LibraryInstallFailed);
  EXPECT_EQ(mock_of(gw).calls(PromptKind::Regenerate), 0u);
  EXPECT_EQ(installer.requested, std::vector<std::string>{"seedforge_rejected_pkg"});
}

TEST(SelfDebug, FirstRegenerationSucceeds) {
  Rig rig;
  auto gw = make_gateway({reply(PromptKind::CreateGenerator, kBad), reply(PromptKind::Regenerate, kGood)});
  DisabledInstaller installer;
  GeneratorForge forge(gw, rig.sandbox, installer, rig.db, {});
  llm::Dialogue dialogue(PromptKind::CreateGenerator, "make one");
  std::string script;
  auto first = forge.request_and_run(dialogue, script);
  ASSERT_FALSE(first.ok());
  auto outcome = forge.self_debug(dialogue, script, first);
  ASSERT_TRUE(std::holds_alternative<ForgedScript>(outcome));
  EXPECT_EQ(gw.completions(), 2u);
  // The regeneration prompt carries the failure.
  EXPECT_NE(gw.transcript().back().prompt.find("broken"), std::string::npos);
}

TEST(SelfDebug, InstalledModuleNeedsNoRegeneration) {
  Rig rig;
  const auto site = rig.dir.path() / "site";
  std::filesystem::create_directories(site);
  auto config = seedforge::testing::python_sandbox(rig.dir.path() / "scratch2");
  config.env["PYTHONPATH"] = site.string();
  Sandbox sandbox(config);
  auto gw = make_gateway(
      {reply(PromptKind::CreateGenerator,
             fenced("import seedforge_dropped\nopen('x.tiff', 'wb').write(bytes([seedforge_dropped.VALUE]))")),
       reply(PromptKind::ExtractLibrary, "seedforge_dropped")});
  ModuleDropInstaller installer(site);
  GeneratorForge forge(gw, sandbox, installer, rig.db, {});
  auto outcome = forge.synthesize("TIFF", kFeature);
  ASSERT_TRUE(std::holds_alternative<ForgedGenerator>(outcome));
  EXPECT_EQ(mock_of(gw).calls(PromptKind::ExtractLibrary), 1u);
  EXPECT_EQ(mock_of(gw).calls(PromptKind::Regenerate), 0u);
  EXPECT_EQ(installer.calls, 1);
}

TEST(SelfDebug, RecurringMissingModuleExhaustsInstallBudget) {
  Rig rig;
  std::vector<llm::MockRecord> script{reply(PromptKind::CreateGenerator, fenced("import seedforge_never_there"))};
  for (int i = 0; i < 6; ++i) script.push_back(reply(PromptKind::ExtractLibrary, "seedforge_never_there"));
  auto gw = make_gateway(script);
  StubInstaller installer(true);  // claims success, changes nothing
  GeneratorForge forge(gw, rig.sandbox, installer, rig.db, {});
  auto outcome = forge.synthesize("TIFF", kFeature);
  ASSERT_TRUE(std::holds_alternative<Failure>(outcome));
  EXPECT_EQ(installer.requested.size(), 5u);
  EXPECT_EQ(mock_of(gw).calls(PromptKind::ExtractLibrary), 5u);
  EXPECT_LE(gw.completions(), SynthesisBudget{}.max_completions());
}

TEST(SelfDebug, DialogueGrowsByTwoTurnsPerRound) {
  Rig rig;
  auto gw = make_gateway({reply(PromptKind::CreateGenerator, kBad), reply(PromptKind::Regenerate, kBad),
                          reply(PromptKind::Regenerate, kBad), reply(PromptKind::Regenerate, kBad)});
  DisabledInstaller installer;
  GeneratorForge forge(gw, rig.sandbox, installer, rig.db, {});
  llm::Dialogue dialogue(PromptKind::CreateGenerator, "make one");
  std::string script;
  auto first = forge.request_and_run(dialogue, script);
  auto outcome = forge.self_debug(dialogue, script, first);
  ASSERT_TRUE(std::holds_alternative<Failure>(outcome));
  // prompt + first reply + 3 x (regeneration request, reply)
  EXPECT_EQ(dialogue.size(), 1u + 1u + 2u * 3u);
  for (std::size_t i = 1; i < dialogue.size(); ++i) {
    EXPECT_EQ(dialogue.turns()[i].role, i % 2 == 1 ? llm::Role::Assistant : llm::Role::User);
  }
}

TEST(SelfDebug, ReplyWithoutCodeCountsAsFailedRun) {
  Rig rig;
  auto gw = make_gateway({reply(PromptKind::CreateGenerator, "I cannot help with that."),
                          reply(PromptKind::Regenerate, kGood)});
  DisabledInstaller installer;
  GeneratorForge forge(gw, rig.sandbox, installer, rig.db, {});
  EXPECT_TRUE(std::holds_alternative<ForgedGenerator>(forge.synthesize("TIFF", kFeature)));
  EXPECT_EQ(gw.completions(), 2u);
}

TEST(SynthesisBudget, WorstCaseBoundUnderAdversarialBackends) {
  const SynthesisBudget budget;
  EXPECT_EQ(budget.max_completions(), 38u);
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Rig rig;
    auto backend = std::make_unique<AdversarialBackend>(seed);
    auto* raw = backend.get();
    llm::Gateway gw(std::move(backend), llm::PromptLibrary::builtin(), {{}, seedforge::testing::mock_prices()});
    CoinInstaller installer(seed);
    GeneratorForge forge(gw, rig.sandbox, installer, rig.db, budget);
    auto outcome = forge.synthesize("TIFF", kFeature);
    EXPECT_LE(raw->calls, 38) << "seed " << seed;
    if (auto* forged = std::get_if<ForgedGenerator>(&outcome)) EXPECT_TRUE(forged->execution.ok());
  }
}

TEST(SynthesisBudget, ValidateRejectsZero) {
  EXPECT_THROW((SynthesisBudget{0, 3, 5}.validate()), Error);
  EXPECT_NO_THROW(SynthesisBudget{}.validate());
}

TEST(ResolveMissingModules, InstallsAndReruns) {
  Rig rig;
  const auto site = rig.dir.path() / "site";
  std::filesystem::create_directories(site);
  auto config = seedforge::testing::python_sandbox(rig.dir.path() / "scratch2");
  config.env["PYTHONPATH"] = site.string();
  Sandbox sandbox(config);
  auto gw = make_gateway({reply(PromptKind::ExtractLibrary, "seedforge_absent_mod")});
  ModuleDropInstaller installer(site);
  GeneratorForge forge(gw, sandbox, installer, rig.db, {});
  const std::string script = "import seedforge_absent_mod\n";
  auto failed = sandbox.execute(script);
  ASSERT_EQ(classify_error(failed.error_excerpt), ScriptError(MissingModule{"seedforge_absent_mod"}));
  auto resolution = forge.resolve_missing_modules(script, failed);
  EXPECT_EQ(resolution.status, ModuleResolution::Status::Resolved);
  EXPECT_TRUE(resolution.execution.ok());
}

TEST(ResolveMissingModules, NonzeroInstallerExit) {
  Rig rig;
  auto gw = make_gateway({reply(PromptKind::ExtractLibrary, "seedforge_absent_mod")});
  CommandInstaller installer({"sh", "-c", "exit 1", "{package}"}, std::chrono::seconds(5));
  GeneratorForge forge(gw, rig.sandbox, installer, rig.db, {});
  const std::string script = "import seedforge_absent_mod\n";
  auto resolution = forge.resolve_missing_modules(script, rig.sandbox.execute(script));
  EXPECT_EQ(resolution.status, ModuleResolution::Status::InstallFailed);
}

TEST(ResolveMissingModules, AllowlistBlocksWithoutInstalling) {
  Rig rig;
  auto gw = make_gateway({reply(PromptKind::ExtractLibrary, "seedforge_absent_mod")});
  StubInstaller installer(true);
  GeneratorForge forge(gw, rig.sandbox, installer, rig.db, {}, InstallPolicy{std::set<std::string>{"numpy"}});
  const std::string script = "import seedforge_absent_mod\n";
  auto resolution = forge.resolve_missing_modules(script, rig.sandbox.execute(script));
  EXPECT_EQ(resolution.status, ModuleResolution::Status::InstallFailed);
  EXPECT_TRUE(installer.requested.empty());
}

TEST(Installer, CommandSubstitutesPackage) {
  CommandInstaller ok({"sh", "-c", "test \"$0\" = wanted", "{package}"}, std::chrono::seconds(5));
  EXPECT_TRUE(ok.install("wanted"));
  EXPECT_FALSE(ok.install("other"));
}

TEST(Installer, DryRunNeverInstalls) {
  CommandInstaller dry({"true"}, std::chrono::seconds(5), true);
  EXPECT_FALSE(dry.install("anything"));
  DisabledInstaller disabled;
  EXPECT_FALSE(disabled.install("anything"));
}

TEST(Installer, PackageNameParsing) {
  EXPECT_EQ(parse_package_name("tifffile"), "tifffile");
  EXPECT_EQ(parse_package_name("```\nPillow\n```"), "Pillow");
  EXPECT_EQ(parse_package_name("\n  `numpy` is needed\n"), "numpy");
  EXPECT_EQ(parse_package_name("   "), "");
}

TEST(GeneratorDB, ContentAddressedInsert) {
  GeneratorDB db;
  Generator g{generator_id("print(1)"), "TIFF", "print(1)", {"A"}, RootLineage{"A"}, GeneratorStatus::Valid};
  EXPECT_TRUE(db.insert(g));
  EXPECT_FALSE(db.insert(g));
  EXPECT_EQ(db.size(), 1u);
  Generator wrong = g;
  wrong.id = std::string(64, '0');
  EXPECT_THROW(db.insert(wrong), Error);
}

TEST(GeneratorDB, LineageChecks) {
  GeneratorDB db;
  Generator root{generator_id("r"), "TIFF", "r", {"A"}, RootLineage{"A"}, GeneratorStatus::Valid};
  db.insert(root);
  Generator orphan{generator_id("o"), "TIFF", "o", {"A"}, MutatedLineage{generator_id("missing"), MutatorKind::Pattern},
                   GeneratorStatus::Valid};
  EXPECT_THROW(db.insert(orphan), Error);
  Generator child{generator_id("c"), "TIFF", "c", {"A"}, MutatedLineage{root.id, MutatorKind::HavocFeature},
                  GeneratorStatus::Valid};
  EXPECT_TRUE(db.insert(child));
  EXPECT_EQ(db.lineage_depth(child.id), 1u);
}

TEST(GeneratorDB, SaveLoadAndTamper) {
  TempDir dir;
  GeneratorDB db;
  Generator root{generator_id("r"), "TIFF", "r", {"A"}, RootLineage{"A"}, GeneratorStatus::Valid};
  Generator child{generator_id("c"), "TIFF", "c", {"A", "havoc:1"}, MutatedLineage{root.id, MutatorKind::HavocFeature},
                  GeneratorStatus::Valid};
  db.insert(root);
  db.insert(child);
  db.save(dir / "g.jsonl", dir / "scripts");
  EXPECT_EQ(GeneratorDB::load(dir / "g.jsonl", dir / "scripts"), db);
  write_file_atomic(dir / "scripts" / (child.id + ".py"), "tampered");
  try {
    GeneratorDB::load(dir / "g.jsonl", dir / "scripts");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CorruptState);
  }
}
