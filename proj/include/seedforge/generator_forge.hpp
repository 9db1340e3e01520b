// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "seedforge/feature_catalog.hpp"
#include "seedforge/llm/gateway.hpp"
#include "seedforge/script_sandbox.hpp"

namespace seedforge {

enum class MutatorKind { RareFeature, HavocFeature, HavocStructure, Pattern };

std::string_view to_string(MutatorKind kind) noexcept;
std::optional<MutatorKind> mutator_kind_from_string(std::string_view id) noexcept;

struct RootLineage {
  std::string feature;
  bool operator==(const RootLineage&) const = default;
};

struct MutatedLineage {
  std::string parent_id;
  MutatorKind kind;
  bool operator==(const MutatedLineage&) const = default;
};

using Lineage = std::variant<RootLineage, MutatedLineage>;

enum class GeneratorStatus { Valid, Failed };

/// A generator script. `id` is the SHA-256 of the script bytes.
struct Generator {
  std::string id;
  std::string format;
  std::string script;
  std::set<std::string> features;
  Lineage lineage;
  GeneratorStatus status = GeneratorStatus::Valid;

  bool is_root() const noexcept { return std::holds_alternative<RootLineage>(lineage); }
  bool operator==(const Generator&) const = default;
};

std::string generator_id(std::string_view script);

/// Content-addressed generator store with per-format insertion order.
class GeneratorDB {
 public:
  /// Returns false when a generator with the same id already exists (no-op).
  /// Throws LineageMismatch when the id does not match the script, or a
  /// mutated generator's parent is missing or its parent chain is cyclic.
  bool insert(Generator generator);

  const Generator* find(std::string_view id) const;
  /// Unique generator whose id starts with `prefix`, or null.
  const Generator* find_by_prefix(std::string_view prefix) const;
  /// Valid generators of `format`, insertion order.
  std::vector<const Generator*> valid(std::string_view format) const;
  const std::vector<Generator>& all() const noexcept { return generators_; }
  std::size_t size() const noexcept { return generators_.size(); }
  std::size_t size(std::string_view format) const;

  /// Number of mutation steps from the root (0 for roots).
  std::size_t lineage_depth(std::string_view id) const;

  /// One JSON object per line (metadata) plus `<id><extension>` script files.
  void save(const std::filesystem::path& index_file, const std::filesystem::path& scripts_dir,
            std::string_view extension = ".py") const;
  /// Throws CorruptState when a script is missing or does not hash to its id.
  static GeneratorDB load(const std::filesystem::path& index_file,
                          const std::filesystem::path& scripts_dir, std::string_view extension = ".py");

  bool operator==(const GeneratorDB&) const = default;

 private:
  std::vector<Generator> generators_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
};

struct SynthesisBudget {
  std::size_t init_max = 2;
  std::size_t debug_max = 3;
  std::size_t max_install = 5;

  /// Throws ConfigError unless every bound is >= 1.
  void validate() const;
  /// INIT_MAX x (1 + DEBUG_MAX x (1 + MAX_INSTALL)).
  std::size_t max_completions() const noexcept {
    return init_max * (1 + debug_max * (1 + max_install));
  }
  bool operator==(const SynthesisBudget&) const = default;
};

enum class FailureKind { ExhaustedBudget, LibraryInstallFailed };

std::string_view to_string(FailureKind kind) noexcept;

struct Failure {
  FailureKind kind;
  std::string detail;
};

template <typename T>
using Outcome = std::variant<T, Failure>;

struct ForgedScript {
  std::string script;
  ExecutionResult execution;  // the successful run; its workdir is still on disk
};

struct ForgedGenerator {
  Generator generator;
  ExecutionResult execution;
  bool inserted = false;  // false when an identical script was already stored
};

class PackageInstaller {
 public:
  virtual ~PackageInstaller() = default;
  /// True when `package` is installed afterwards.
  virtual bool install(const std::string& package) = 0;
};

/// Runs a command template such as {"python3", "-m", "pip", "install", "{package}"}.
/// In dry-run mode the command is only logged and reported as failed, since
/// nothing was installed.
class CommandInstaller final : public PackageInstaller {
 public:
  CommandInstaller(std::vector<std::string> command, std::chrono::seconds timeout, bool dry_run = false);
  bool install(const std::string& package) override;

 private:
  std::vector<std::string> command_;
  std::chrono::seconds timeout_;
  bool dry_run_;
};

/// Installer that refuses everything; the default when installs are disabled.
class DisabledInstaller final : public PackageInstaller {
 public:
  bool install(const std::string& /*package*/) override { return false; }
};

struct InstallPolicy {
  /// When set, packages outside the list are refused without running the installer.
  std::optional<std::set<std::string>> allowlist;
};

/// Package name from an extract-library reply: first token of the first
/// non-empty line, without fences, quotes or backticks. Empty if unusable.
std::string parse_package_name(std::string_view reply);

struct ModuleResolution {
  enum class Status { Resolved, InstallFailed };
  Status status;
  ExecutionResult execution;  // last rerun (Resolved)
  std::string reason;         // InstallFailed
};

/// Generator synthesis with bounded regenerate-and-debug.
class GeneratorForge {
 public:
  GeneratorForge(llm::Gateway& gateway, Sandbox& sandbox, PackageInstaller& installer,
                 GeneratorDB& db, SynthesisBudget budget, InstallPolicy policy = {});

  /// Up to INIT_MAX fresh dialogues, each followed by self_debug. A valid
  /// generator is recorded in the database. LLM errors propagate.
  Outcome<ForgedGenerator> synthesize(const std::string& format, const Feature& feature);

  /// Debug rounds on `dialogue`, whose last turn is the assistant reply that
  /// produced `script`. Returns the first script whose execution succeeds.
  Outcome<ForgedScript> self_debug(llm::Dialogue& dialogue, std::string script, ExecutionResult failed);

  /// Asks for the package behind a missing module, installs it and reruns
  /// `script`, while the rerun still reports a missing module (at most
  /// MAX_INSTALL installs).
  ModuleResolution resolve_missing_modules(const std::string& script, ExecutionResult failed);

  /// Completion for `dialogue`, appended to it as the assistant turn, then
  /// extracted and executed. A reply without code counts as a failed run.
  ExecutionResult request_and_run(llm::Dialogue& dialogue, std::string& script);

  const SynthesisBudget& budget() const noexcept { return budget_; }
  llm::Gateway& gateway() noexcept { return gateway_; }
  Sandbox& sandbox() noexcept { return sandbox_; }
  GeneratorDB& db() noexcept { return db_; }

 private:
  llm::Gateway& gateway_;
  Sandbox& sandbox_;
  PackageInstaller& installer_;
  GeneratorDB& db_;
  SynthesisBudget budget_;
  InstallPolicy policy_;
};

}  // namespace seedforge
