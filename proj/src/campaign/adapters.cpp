// SPDX-License-Identifier: Apache-2.0

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <thread>

#include "seedforge/campaign.hpp"
#include "seedforge/common/error.hpp"
#include "seedforge/common/log.hpp"

extern char** environ;

namespace seedforge {

namespace fs = std::filesystem;

SimulatedAdapter::SimulatedAdapter(const SimulatorSettings& settings, const fs::path& corpus_dir,
                                   std::int64_t poll_interval_secs)
    : fuzzer_(SimTarget::from_json(settings.target), corpus_dir, settings.seed, settings.exec_seconds),
      initial_(settings.initial_seeds),
      execs_per_poll_(std::max<std::uint64_t>(
          1, static_cast<std::uint64_t>(std::llround(static_cast<double>(poll_interval_secs) / settings.exec_seconds)))),
      max_execs_(settings.max_execs) {}

void SimulatedAdapter::start(ProvenanceIndex& index, bool fresh) {
  if (!fresh) return;
  for (const auto& seed : initial_) fuzzer_.add_initial(seed.name, seed.content, index);
}

std::vector<NewFind> SimulatedAdapter::advance(ProvenanceIndex& index) {
  const auto left = max_execs_ > fuzzer_.execs() ? max_execs_ - fuzzer_.execs() : 0;
  return fuzzer_.advance(std::min(execs_per_poll_, left), index);
}

std::vector<std::uint32_t> SimulatedAdapter::covered_edges() const {
  return {fuzzer_.covered().begin(), fuzzer_.covered().end()};
}

AflAdapter::AflAdapter(FuzzerSettings settings) : settings_(std::move(settings)), watcher_(settings_.queue_dir) {}

AflAdapter::~AflAdapter() { stop(); }

void AflAdapter::start(ProvenanceIndex& /*index*/, bool /*fresh*/) {
  fs::create_directories(settings_.corpus_dir);
  started_ = static_cast<std::int64_t>(std::time(nullptr));
  last_.last_find_unix = started_;
  if (settings_.command.empty()) return;

  std::vector<char*> argv;
  for (auto& arg : settings_.command) argv.push_back(arg.data());
  argv.push_back(nullptr);
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, "/dev/null", O_WRONLY, 0);
  pid_t pid = -1;
  int rc = posix_spawnp(&pid, argv[0], &actions, &attr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  if (rc != 0) throw Error(ErrorKind::ConfigError, "cannot start fuzzer '" + settings_.command[0] + "'");
  child_ = pid;
  log_info("fuzzer started, pid ", pid);
}

std::vector<NewFind> AflAdapter::advance(ProvenanceIndex& index) {
  std::this_thread::sleep_for(std::chrono::seconds(settings_.poll_interval_secs));
  return watcher_.scan(index);
}

CoverageSnapshot AflAdapter::snapshot() {
  if (!fs::exists(settings_.stats_file)) return last_;  // fuzzer still starting up
  auto next = parse_stats(read_file(settings_.stats_file), settings_.stats_keys);
  last_ = next;
  return last_;
}

std::int64_t AflAdapter::now() const { return static_cast<std::int64_t>(std::time(nullptr)); }

bool AflAdapter::finished() const {
  if (child_ > 0) {
    int status = 0;
    if (::waitpid(child_, &status, WNOHANG) == child_) {
      log_warn("fuzzer exited");
      child_ = -1;
      return true;
    }
  }
  return now() - started_ >= settings_.wall_clock_secs;
}

void AflAdapter::stop() {
  if (child_ <= 0) return;
  ::kill(-child_, SIGTERM);
  for (int i = 0; i < 50; ++i) {
    int status = 0;
    if (::waitpid(child_, &status, WNOHANG) == child_) {
      child_ = -1;
      return;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  ::kill(-child_, SIGKILL);
  ::waitpid(child_, nullptr, 0);
  child_ = -1;
}

nlohmann::json AflAdapter::save() const {
  nlohmann::json known = nlohmann::json::object();
  for (const auto& [id, name] : watcher_.known()) known[std::to_string(id)] = name;
  return {{"queue", known}};
}

void AflAdapter::load(const nlohmann::json& state) {
  if (!state.is_object() || !state.contains("queue")) return;
  std::map<std::uint64_t, std::string> known;
  for (const auto& [id, name] : state.at("queue").items()) known[std::stoull(id)] = name.get<std::string>();
  watcher_.restore(std::move(known));
}

}  // namespace seedforge
