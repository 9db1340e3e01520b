// SPDX-License-Identifier: Apache-2.0

#include "seedforge/generator_forge.hpp"

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "seedforge/common/error.hpp"
#include "seedforge/common/log.hpp"
#include "seedforge/common/util.hpp"

extern char** environ;

namespace seedforge {

namespace fs = std::filesystem;

std::string_view to_string(MutatorKind kind) noexcept {
  switch (kind) {
    case MutatorKind::RareFeature: return "rare_feature";
    case MutatorKind::HavocFeature: return "havoc_feature";
    case MutatorKind::HavocStructure: return "havoc_structure";
    case MutatorKind::Pattern: return "pattern";
  }
  return "";
}

std::optional<MutatorKind> mutator_kind_from_string(std::string_view id) noexcept {
  for (auto kind : {MutatorKind::RareFeature, MutatorKind::HavocFeature, MutatorKind::HavocStructure,
                    MutatorKind::Pattern}) {
    if (to_string(kind) == id) return kind;
  }
  return std::nullopt;
}

std::string_view to_string(FailureKind kind) noexcept {
  return kind == FailureKind::ExhaustedBudget ? "exhausted_budget" : "library_install_failed";
}

std::string generator_id(std::string_view script) { return sha256_hex(script); }

// ---------------------------------------------------------------------------
// GeneratorDB

bool GeneratorDB::insert(Generator generator) {
  if (generator.id != generator_id(generator.script)) {
    throw Error(ErrorKind::LineageMismatch, "generator id does not match its script");
  }
  if (by_id_.count(generator.id) != 0) return false;
  if (const auto* mutated = std::get_if<MutatedLineage>(&generator.lineage)) {
    // Walk to the root; a missing link or a revisit means the chain is broken.
    std::set<std::string> visited{generator.id};
    std::string cursor = mutated->parent_id;
    while (true) {
      const Generator* parent = find(cursor);
      if (parent == nullptr) throw Error(ErrorKind::LineageMismatch, "unknown parent " + cursor);
      if (!visited.insert(cursor).second) throw Error(ErrorKind::LineageMismatch, "cyclic lineage");
      const auto* link = std::get_if<MutatedLineage>(&parent->lineage);
      if (link == nullptr) break;
      cursor = link->parent_id;
    }
  }
  by_id_.emplace(generator.id, generators_.size());
  generators_.push_back(std::move(generator));
  return true;
}

const Generator* GeneratorDB::find(std::string_view id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &generators_[it->second];
}

const Generator* GeneratorDB::find_by_prefix(std::string_view prefix) const {
  const Generator* match = nullptr;
  for (auto it = by_id_.lower_bound(prefix); it != by_id_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    if (match != nullptr) return nullptr;
    match = &generators_[it->second];
  }
  return match;
}

std::vector<const Generator*> GeneratorDB::valid(std::string_view format) const {
  std::vector<const Generator*> out;
  for (const auto& g : generators_) {
    if (g.format == format && g.status == GeneratorStatus::Valid) out.push_back(&g);
  }
  return out;
}

std::size_t GeneratorDB::size(std::string_view format) const {
  return static_cast<std::size_t>(std::count_if(generators_.begin(), generators_.end(),
                                                [&](const Generator& g) { return g.format == format; }));
}

std::size_t GeneratorDB::lineage_depth(std::string_view id) const {
  std::size_t depth = 0;
  const Generator* g = find(id);
  while (g != nullptr) {
    const auto* link = std::get_if<MutatedLineage>(&g->lineage);
    if (link == nullptr) break;
    ++depth;
    g = find(link->parent_id);
  }
  return depth;
}

void GeneratorDB::save(const fs::path& index_file, const fs::path& scripts_dir,
                       std::string_view extension) const {
  fs::create_directories(scripts_dir);
  std::string index;
  for (const auto& g : generators_) {
    const auto script_path = scripts_dir / (g.id + std::string(extension));
    // Scripts are immutable and content-addressed, so existing files are kept.
    if (!fs::exists(script_path)) write_file_atomic(script_path, g.script);
    nlohmann::json lineage;
    if (const auto* root = std::get_if<RootLineage>(&g.lineage)) {
      lineage = {{"root", root->feature}};
    } else {
      const auto& mutated = std::get<MutatedLineage>(g.lineage);
      lineage = {{"parent", mutated.parent_id}, {"mutator", std::string(to_string(mutated.kind))}};
    }
    nlohmann::json line = {{"id", g.id},
                           {"format", g.format},
                           {"features", g.features},
                           {"lineage", lineage},
                           {"status", g.status == GeneratorStatus::Valid ? "valid" : "failed"}};
    index += line.dump();
    index += '\n';
  }
  write_file_atomic(index_file, index);
}

GeneratorDB GeneratorDB::load(const fs::path& index_file, const fs::path& scripts_dir,
                              std::string_view extension) {
  GeneratorDB db;
  if (!fs::exists(index_file)) return db;
  try {
    for (const auto& line : split_lines(read_file(index_file))) {
      if (line.empty()) continue;
      auto json = nlohmann::json::parse(line);
      Generator g;
      g.id = json.at("id").get<std::string>();
      g.format = json.at("format").get<std::string>();
      g.features = json.at("features").get<std::set<std::string>>();
      const auto& lineage = json.at("lineage");
      if (lineage.contains("root")) {
        g.lineage = RootLineage{lineage["root"].get<std::string>()};
      } else {
        auto kind = mutator_kind_from_string(lineage.at("mutator").get<std::string>());
        if (!kind) throw Error(ErrorKind::CorruptState, "unknown mutator in generator db");
        g.lineage = MutatedLineage{lineage.at("parent").get<std::string>(), *kind};
      }
      g.status = json.at("status").get<std::string>() == "valid" ? GeneratorStatus::Valid
                                                                  : GeneratorStatus::Failed;
      const auto script_path = scripts_dir / (g.id + std::string(extension));
      if (!fs::exists(script_path)) throw Error(ErrorKind::CorruptState, "missing script " + g.id);
      g.script = read_file(script_path);
      if (generator_id(g.script) != g.id) {
        throw Error(ErrorKind::CorruptState, "script " + g.id + " does not match its hash");
      }
      db.insert(std::move(g));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptState, std::string("generator db: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::LineageMismatch) throw Error(ErrorKind::CorruptState, e.detail());
    throw;
  }
  return db;
}

// ---------------------------------------------------------------------------
// Installers

void SynthesisBudget::validate() const {
  if (init_max < 1 || debug_max < 1 || max_install < 1) {
    throw Error(ErrorKind::ConfigError, "synthesis budget bounds must all be >= 1");
  }
}

CommandInstaller::CommandInstaller(std::vector<std::string> command, std::chrono::seconds timeout,
                                   bool dry_run)
    : command_(std::move(command)), timeout_(timeout), dry_run_(dry_run) {}

bool CommandInstaller::install(const std::string& package) {
  std::vector<std::string> args;
  for (const auto& part : command_) {
    std::string arg = part;
    for (auto pos = arg.find("{package}"); pos != std::string::npos; pos = arg.find("{package}")) {
      arg.replace(pos, 9, package);
    }
    args.push_back(std::move(arg));
  }
  if (args.empty()) return false;
  if (dry_run_) {
    std::string joined;
    for (const auto& a : args) joined += (joined.empty() ? "" : " ") + a;
    log_info("dry-run install: ", joined);
    return false;
  }

  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);
  pid_t pid = 0;
  int rc = ::posix_spawnp(&pid, argv[0], nullptr, &attr, argv.data(), environ);
  posix_spawnattr_destroy(&attr);
  if (rc != 0) {
    log_warn("installer could not be started: ", args.front());
    return false;
  }
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  int status = 0;
  while (::waitpid(pid, &status, WNOHANG) == 0) {
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(-pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      log_warn("installer timed out for ", package);
      return false;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return WIFEXITED(status) && WEXITSTATUS(status) == 0;
}

std::string parse_package_name(std::string_view reply) {
  for (auto line : split_lines(reply)) {
    line = trim(line);
    if (line.empty() || line.rfind("```", 0) == 0) continue;
    std::string token;
    for (char c : line) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!token.empty()) break;
        continue;
      }
      token.push_back(c);
    }
    auto strip = [&token](char c) {
      while (!token.empty() && token.front() == c) token.erase(0, 1);
      while (!token.empty() && token.back() == c) token.pop_back();
    };
    for (char c : {'`', '\'', '"', '.', ','}) strip(c);
    bool ok = !token.empty() && std::all_of(token.begin(), token.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' ||
             c == '[' || c == ']' || c == '=' || c == '<' || c == '>';
    });
    if (ok && token.front() != '-') return token;
    return {};
  }
  return {};
}

// ---------------------------------------------------------------------------
// GeneratorForge

GeneratorForge::GeneratorForge(llm::Gateway& gateway, Sandbox& sandbox, PackageInstaller& installer,
                               GeneratorDB& db, SynthesisBudget budget, InstallPolicy policy)
    : gateway_(gateway),
      sandbox_(sandbox),
      installer_(installer),
      db_(db),
      budget_(budget),
      policy_(std::move(policy)) {
  budget_.validate();
}

ExecutionResult GeneratorForge::request_and_run(llm::Dialogue& dialogue, std::string& script) {
  std::string reply;
  try {
    reply = gateway_.complete(dialogue).text;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::EmptyReply) throw;
  }
  dialogue.add_assistant(reply);
  try {
    script = llm::extract_code_block(reply);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::EmptyScript) throw;
    script.clear();
    ExecutionResult empty;
    empty.status = ExecStatus::Failure;
    empty.error_excerpt = "EmptyScript: the reply did not contain a program";
    return empty;
  }
  return sandbox_.execute(script);
}

ModuleResolution GeneratorForge::resolve_missing_modules(const std::string& script, ExecutionResult failed) {
  ExecutionResult current = std::move(failed);
  auto give_up = [&](std::string reason) {
    sandbox_.discard(current);
    return ModuleResolution{ModuleResolution::Status::InstallFailed, {}, std::move(reason)};
  };

  for (std::size_t installs = 0;; ++installs) {
    const auto error = classify_error(current.error_excerpt);
    const auto* missing = std::get_if<MissingModule>(&error);
    if (missing == nullptr) return ModuleResolution{ModuleResolution::Status::Resolved, std::move(current), {}};
    if (installs == budget_.max_install) {
      return give_up("module '" + missing->name + "' still missing after " + std::to_string(installs) +
                     " installs");
    }

    llm::Dialogue ask(llm::PromptKind::ExtractLibrary,
                      gateway_.render(llm::PromptKind::ExtractLibrary, {{"error_info", current.error_excerpt}}));
    std::string reply;
    try {
      reply = gateway_.complete(ask).text;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyReply) throw;
    }
    const auto package = parse_package_name(reply);
    if (package.empty()) return give_up("no package name for module '" + missing->name + "'");
    if (policy_.allowlist && policy_.allowlist->count(package) == 0) {
      return give_up("package '" + package + "' is not on the allowlist");
    }
    if (!installer_.install(package)) return give_up("failed to install '" + package + "'");
    log_info("installed ", package, " for missing module ", missing->name);

    sandbox_.discard(current);
    current = sandbox_.execute(script);
    if (current.ok()) return ModuleResolution{ModuleResolution::Status::Resolved, std::move(current), {}};
  }
}

Outcome<ForgedScript> GeneratorForge::self_debug(llm::Dialogue& dialogue, std::string script,
                                                 ExecutionResult failed) {
  ExecutionResult current = std::move(failed);
  for (std::size_t round = 0;; ++round) {
    if (current.ok()) return ForgedScript{std::move(script), std::move(current)};
    if (round == budget_.debug_max) {
      auto detail = current.error_excerpt;
      sandbox_.discard(current);
      return Failure{FailureKind::ExhaustedBudget, std::move(detail)};
    }

    if (std::holds_alternative<MissingModule>(classify_error(current.error_excerpt))) {
      auto resolution = resolve_missing_modules(script, std::move(current));
      if (resolution.status == ModuleResolution::Status::InstallFailed) {
        return Failure{FailureKind::LibraryInstallFailed, resolution.reason};
      }
      current = std::move(resolution.execution);
      if (current.ok()) return ForgedScript{std::move(script), std::move(current)};
    }

    const std::string error_info = current.error_excerpt;
    sandbox_.discard(current);
    dialogue.add_user(llm::PromptKind::Regenerate,
                      gateway_.render(llm::PromptKind::Regenerate, {{"error_info", error_info}}));
    current = request_and_run(dialogue, script);
  }
}

Outcome<ForgedGenerator> GeneratorForge::synthesize(const std::string& format, const Feature& feature) {
  std::string last_error;
  for (std::size_t attempt = 0; attempt < budget_.init_max; ++attempt) {
    llm::Dialogue dialogue(
        llm::PromptKind::CreateGenerator,
        gateway_.render(llm::PromptKind::CreateGenerator, {{"format", format}, {"feature", feature.label()}}));
    std::string script;
    auto first = request_and_run(dialogue, script);
    auto outcome = self_debug(dialogue, std::move(script), std::move(first));
    if (auto* failure = std::get_if<Failure>(&outcome)) {
      if (failure->kind == FailureKind::LibraryInstallFailed) return *failure;
      last_error = failure->detail;
      continue;
    }
    auto& forged = std::get<ForgedScript>(outcome);
    Generator generator;
    generator.id = generator_id(forged.script);
    generator.format = format;
    generator.script = std::move(forged.script);
    generator.features = {feature.name};
    generator.lineage = RootLineage{feature.name};
    generator.status = GeneratorStatus::Valid;
    bool inserted = db_.insert(generator);
    if (!inserted) generator = *db_.find(generator.id);
    return ForgedGenerator{std::move(generator), std::move(forged.execution), inserted};
  }
  return Failure{FailureKind::ExhaustedBudget, last_error};
}

}  // namespace seedforge
