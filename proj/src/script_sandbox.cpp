// SPDX-License-Identifier: Apache-2.0

#include "seedforge/script_sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <set>
#include <thread>

#include "seedforge/common/error.hpp"
#include "seedforge/common/util.hpp"

extern char** environ;

namespace seedforge {

namespace fs = std::filesystem;

std::string_view to_string(ExecStatus status) noexcept {
  switch (status) {
    case ExecStatus::Success: return "success";
    case ExecStatus::Failure: return "failure";
    case ExecStatus::Timeout: return "timeout";
  }
  return "";
}

std::string_view to_string(SeedPhase phase) noexcept {
  switch (phase) {
    case SeedPhase::Initial: return "initial";
    case SeedPhase::Synthesis: return "synthesis";
    case SeedPhase::Mutation: return "mutation";
  }
  return "";
}

namespace {

class Fd {
 public:
  explicit Fd(int fd = -1) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const { return fd_; }
  void reset(int fd = -1) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = fd;
  }

 private:
  int fd_;
};

void make_pipe(Fd& read_end, Fd& write_end) {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) throw Error(ErrorKind::IoError, "pipe2 failed");
  read_end.reset(fds[0]);
  write_end.reset(fds[1]);
}

std::vector<std::string> build_environment(const std::map<std::string, std::string>& overrides) {
  std::vector<std::string> env;
  for (char** entry = environ; entry != nullptr && *entry != nullptr; ++entry) {
    std::string_view kv(*entry);
    auto eq = kv.find('=');
    if (eq != std::string_view::npos && overrides.count(std::string(kv.substr(0, eq))) != 0) continue;
    env.emplace_back(kv);
  }
  for (const auto& [key, value] : overrides) env.push_back(key + "=" + value);
  return env;
}

std::vector<ProducedFile> list_files(const fs::path& root) {
  std::vector<ProducedFile> files;
  std::error_code ec;
  for (fs::recursive_directory_iterator it(root, ec), end; !ec && it != end; it.increment(ec)) {
    std::error_code status_ec;
    if (!it->is_regular_file(status_ec)) continue;
    files.push_back(ProducedFile{fs::relative(it->path(), root), it->file_size(status_ec)});
  }
  std::sort(files.begin(), files.end(),
            [](const ProducedFile& a, const ProducedFile& b) { return a.path < b.path; });
  return files;
}

}  // namespace

ExecutionResult run_script(const std::vector<std::string>& interpreter, const fs::path& script_path,
                           const fs::path& workdir, const SandboxLimits& limits,
                           const std::map<std::string, std::string>& env) {
  if (interpreter.empty()) throw Error(ErrorKind::InterpreterMissing, "empty interpreter command");

  std::vector<std::string> args = interpreter;
  args.push_back(fs::absolute(script_path).string());
  std::vector<char*> argv;
  for (auto& arg : args) argv.push_back(arg.data());
  argv.push_back(nullptr);
  auto env_strings = build_environment(env);
  std::vector<char*> envp;
  for (auto& entry : env_strings) envp.push_back(entry.data());
  envp.push_back(nullptr);
  const std::string workdir_str = workdir.string();

  Fd err_read, err_write, exec_read, exec_write;
  make_pipe(err_read, err_write);
  make_pipe(exec_read, exec_write);

  const auto started = std::chrono::steady_clock::now();
  const auto deadline = started + limits.timeout;
  pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorKind::IoError, "fork failed");
  if (pid == 0) {
    ::setpgid(0, 0);
    int devnull = ::open("/dev/null", O_RDWR);
    if (devnull >= 0) {
      ::dup2(devnull, STDIN_FILENO);
      ::dup2(devnull, STDOUT_FILENO);
    }
    ::dup2(err_write.get(), STDERR_FILENO);
    rlimit fsize{limits.max_file_bytes, limits.max_file_bytes};
    ::setrlimit(RLIMIT_FSIZE, &fsize);
    rlimit core{0, 0};
    ::setrlimit(RLIMIT_CORE, &core);
    int err = 0;
    if (::chdir(workdir_str.c_str()) == 0) {
      ::execvpe(argv[0], argv.data(), envp.data());
    }
    err = errno;
    [[maybe_unused]] auto n = ::write(exec_write.get(), &err, sizeof(err));
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  err_write.reset();
  exec_write.reset();

  int exec_errno = 0;
  if (::read(exec_read.get(), &exec_errno, sizeof(exec_errno)) == static_cast<ssize_t>(sizeof(exec_errno))) {
    int status = 0;
    ::waitpid(pid, &status, 0);
    throw Error(ErrorKind::InterpreterMissing, interpreter.front() + ": " + std::strerror(exec_errno));
  }

  std::string stderr_text;
  bool timed_out = false;
  bool pipe_open = true;
  int wait_status = 0;
  bool reaped = false;
  char buffer[4096];
  while (true) {
    auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      timed_out = true;
      break;
    }
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
    if (pipe_open) {
      pollfd pfd{err_read.get(), POLLIN, 0};
      int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining, 50)));
      if (ready > 0) {
        ssize_t n = ::read(err_read.get(), buffer, sizeof(buffer));
        if (n > 0) {
          stderr_text.append(buffer, static_cast<std::size_t>(n));
          if (stderr_text.size() > 4 * kErrorExcerptChars) stderr_text = tail(stderr_text, 2 * kErrorExcerptChars);
        } else {
          pipe_open = false;
        }
      }
    } else {
      std::this_thread::sleep_for(std::chrono::milliseconds(std::min<long long>(remaining, 2)));
    }
    if (::waitpid(pid, &wait_status, WNOHANG) == pid) {
      reaped = true;
      break;
    }
  }
  // Background children of the script are not allowed to outlive it.
  ::kill(-pid, SIGKILL);
  if (!reaped) ::waitpid(pid, &wait_status, 0);
  ::fcntl(err_read.get(), F_SETFL, O_NONBLOCK);
  while (true) {
    ssize_t n = ::read(err_read.get(), buffer, sizeof(buffer));
    if (n <= 0) break;
    stderr_text.append(buffer, static_cast<std::size_t>(n));
  }

  ExecutionResult result;
  result.workdir = workdir;
  result.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (timed_out) {
    result.status = ExecStatus::Timeout;
    result.error_excerpt = tail(stderr_text + "\nTimeout: killed after " +
                                    std::to_string(limits.timeout.count()) + " ms",
                                kErrorExcerptChars);
  } else if (WIFEXITED(wait_status) && WEXITSTATUS(wait_status) == 0) {
    result.status = ExecStatus::Success;
    result.exit_code = 0;
    result.error_excerpt = tail(stderr_text, kErrorExcerptChars);
  } else {
    result.status = ExecStatus::Failure;
    if (WIFEXITED(wait_status)) {
      result.exit_code = WEXITSTATUS(wait_status);
    } else if (WIFSIGNALED(wait_status)) {
      stderr_text += "\nKilled by signal " + std::to_string(WTERMSIG(wait_status));
    }
    if (trim(stderr_text).empty()) {
      stderr_text = "process exited with status " + std::to_string(result.exit_code);
    }
    result.error_excerpt = tail(stderr_text, kErrorExcerptChars);
  }
  result.produced_files = list_files(workdir);
  return result;
}

ScriptError classify_error(std::string_view excerpt) {
  static constexpr std::string_view kMarker = "ModuleNotFoundError";
  static constexpr std::string_view kPhrase = "No module named ";
  auto marker = excerpt.rfind(kMarker);
  if (marker == std::string_view::npos) return OtherError{std::string(excerpt)};
  auto phrase = excerpt.find(kPhrase, marker);
  if (phrase == std::string_view::npos) return OtherError{std::string(excerpt)};
  auto open = phrase + kPhrase.size();
  if (open >= excerpt.size() || (excerpt[open] != '\'' && excerpt[open] != '"')) {
    return OtherError{std::string(excerpt)};
  }
  auto close = excerpt.find(excerpt[open], open + 1);
  if (close == std::string_view::npos || close == open + 1) return OtherError{std::string(excerpt)};
  return MissingModule{std::string(excerpt.substr(open + 1, close - open - 1))};
}

SeedBatch harvest(const fs::path& workdir, const std::vector<std::string>& suffixes,
                  const SandboxLimits& limits) {
  std::set<std::string> wanted;
  for (const auto& suffix : suffixes) {
    std::string s = to_lower(suffix);
    if (!s.empty() && s.front() == '.') s.erase(0, 1);
    wanted.insert(s);
  }

  SeedBatch batch;
  if (!fs::exists(workdir)) return batch;
  std::set<std::string> names;
  for (const auto& file : list_files(workdir)) {
    if (batch.seeds.size() >= limits.max_files) break;
    auto extension = to_lower(file.path.extension().string());
    if (extension.empty() || wanted.count(extension.substr(1)) == 0) continue;
    if (file.size == 0 || file.size > limits.max_file_bytes) continue;

    std::string name = file.path.generic_string();
    std::replace(name.begin(), name.end(), '/', '_');
    for (int k = 1; names.count(name) != 0; ++k) name = std::to_string(k) + "_" + name;
    names.insert(name);
    batch.seeds.push_back(Seed{name, read_file(workdir / file.path)});
  }
  return batch;
}

const SuffixMap& default_suffix_map() {
  static const SuffixMap map{
      // images
      {"JPG", {"jpg", "jpeg"}},
      {"JPEG", {"jpg", "jpeg"}},
      {"GIF", {"gif"}},
      {"BMP", {"bmp", "dib"}},
      {"PNG", {"png"}},
      {"ICO", {"ico"}},
      {"XMP", {"xmp"}},
      {"TGA", {"tga"}},
      {"TIFF", {"tiff", "tif"}},
      {"ANI", {"ani"}},
      {"RAS", {"ras"}},
      {"PGX", {"pgx"}},
      {"PNM", {"pnm", "pbm", "pgm", "ppm"}},
      {"RAW", {"raw"}},
      // audio
      {"OGG", {"ogg", "oga"}},
      {"MP3", {"mp3"}},
      {"WAV", {"wav"}},
      {"AIFF", {"aiff", "aif"}},
      {"AIFC", {"aifc"}},
      {"AU", {"au", "snd"}},
      {"CAF", {"caf"}},
      // video
      {"FLV", {"flv"}},
      {"MP4", {"mp4", "m4v", "m4a"}},
      // documents and fonts
      {"PDF", {"pdf"}},
      {"TTF", {"ttf"}},
      {"OTF", {"otf"}},
      {"WOFF", {"woff"}},
      {"TTC", {"ttc"}},
      // other binary formats
      {"ZLIB", {"zlib", "zz"}},
      {"PCAP", {"pcap"}},
      {"DER", {"der", "cer"}},
      {"ELF", {"elf"}},
      {"MACHO", {"macho", "dylib"}},
      {"WEBASSEMBLY", {"wasm"}},
      {"WASM", {"wasm"}},
      {"ICC", {"icc", "icm"}},
  };
  return map;
}

namespace {
std::string canonical_format(std::string_view format) {
  std::string out;
  for (char c : format) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
  }
  return out;
}
}  // namespace

std::vector<std::string> suffixes_for(const SuffixMap& map, std::string_view format) {
  const auto key = canonical_format(format);
  for (const auto& [name, suffixes] : map) {
    if (canonical_format(name) == key) return suffixes;
  }
  return {to_lower(key)};
}

Sandbox::Sandbox(SandboxConfig config) : config_(std::move(config)) {
  if (config_.scratch_root.empty()) config_.scratch_root = fs::temp_directory_path() / "seedforge-scratch";
  fs::create_directories(config_.scratch_root);
}

ExecutionResult Sandbox::execute(std::string_view script) {
  const auto run = counter_.fetch_add(1) + 1;
  const auto run_dir =
      config_.scratch_root / ("run-" + std::to_string(::getpid()) + "-" + std::to_string(run));
  fs::remove_all(run_dir);
  const auto workdir = run_dir / "work";
  fs::create_directories(workdir);
  const auto script_path = run_dir / config_.script_name;
  {
    std::ofstream out(script_path, std::ios::binary);
    out.write(script.data(), static_cast<std::streamsize>(script.size()));
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + script_path.string());
  }
  try {
    auto result = run_script(config_.interpreter, script_path, workdir, config_.limits, config_.env);
    fault_point("sandbox.execute");
    return result;
  } catch (...) {
    fs::remove_all(run_dir);
    throw;
  }
}

void Sandbox::discard(const ExecutionResult& result) const {
  if (config_.keep_artifacts || result.workdir.empty()) return;
  std::error_code ec;
  fs::remove_all(result.workdir.parent_path(), ec);
}

}  // namespace seedforge
