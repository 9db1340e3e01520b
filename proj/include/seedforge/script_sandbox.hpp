// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace seedforge {

struct SandboxLimits {
  std::chrono::milliseconds timeout{30'000};
  std::uint64_t max_file_bytes = 16ULL * 1024 * 1024;
  std::size_t max_files = 64;
};

enum class ExecStatus { Success, Failure, Timeout };

std::string_view to_string(ExecStatus status) noexcept;

struct ProducedFile {
  std::filesystem::path path;  // relative to the workdir
  std::uint64_t size = 0;
};

struct ExecutionResult {
  ExecStatus status = ExecStatus::Failure;
  std::string error_excerpt;
  std::vector<ProducedFile> produced_files;
  double duration_seconds = 0.0;
  int exit_code = -1;
  std::filesystem::path workdir;

  bool ok() const noexcept { return status == ExecStatus::Success; }
};

/// Error excerpts handed to prompts keep this many trailing characters.
inline constexpr std::size_t kErrorExcerptChars = 2000;

/// Runs `interpreter... <script_path>` with `workdir` as the current directory.
/// The script file must live outside `workdir`. Throws InterpreterMissing when
/// the interpreter cannot be executed at all.
ExecutionResult run_script(const std::vector<std::string>& interpreter,
                           const std::filesystem::path& script_path,
                           const std::filesystem::path& workdir, const SandboxLimits& limits,
                           const std::map<std::string, std::string>& env = {});

struct MissingModule {
  std::string name;
  bool operator==(const MissingModule&) const = default;
};
struct OtherError {
  std::string excerpt;
  bool operator==(const OtherError&) const = default;
};
using ScriptError = std::variant<MissingModule, OtherError>;

/// MissingModule(name) when the excerpt carries the interpreter's missing-module
/// marker with a quoted module name, otherwise OtherError.
ScriptError classify_error(std::string_view excerpt);

enum class SeedPhase { Initial, Synthesis, Mutation };

std::string_view to_string(SeedPhase phase) noexcept;

struct Seed {
  std::string filename;
  std::string content;
};

struct SeedBatch {
  std::vector<Seed> seeds;
  std::string generator_id;
  SeedPhase phase = SeedPhase::Synthesis;
};

/// Collects non-empty files under `workdir` whose extension matches one of
/// `suffixes` (case-insensitive), honouring the per-file size and file-count
/// limits. Filenames are the workdir-relative paths with '/' replaced by '_'.
SeedBatch harvest(const std::filesystem::path& workdir, const std::vector<std::string>& suffixes,
                  const SandboxLimits& limits);

/// Format name (upper case) to file suffixes, without dots.
using SuffixMap = std::map<std::string, std::vector<std::string>>;

/// Shipped defaults for the 34 formats the approach was evaluated on.
const SuffixMap& default_suffix_map();
/// Suffixes for `format`; falls back to the lowercased format name.
std::vector<std::string> suffixes_for(const SuffixMap& map, std::string_view format);

struct SandboxConfig {
  std::vector<std::string> interpreter{"python3"};
  std::string script_name = "generator.py";
  std::filesystem::path scratch_root;
  SandboxLimits limits;
  std::map<std::string, std::string> env;
  bool keep_artifacts = false;
};

/// Executes generator scripts, each in a fresh private workdir under the
/// scratch root. Safe to call concurrently.
class Sandbox {
 public:
  explicit Sandbox(SandboxConfig config);

  ExecutionResult execute(std::string_view script);
  /// Removes the run directory behind `result` unless artifacts are kept.
  void discard(const ExecutionResult& result) const;

  const SandboxConfig& config() const noexcept { return config_; }
  std::uint64_t runs() const noexcept { return counter_.load(); }

 private:
  SandboxConfig config_;
  std::atomic<std::uint64_t> counter_{0};
};

}  // namespace seedforge
