// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <future>

#include "seedforge/common/error.hpp"
#include "seedforge/script_sandbox.hpp"
#include "seedforge/common/util.hpp"
#include "test_support.hpp"

using namespace seedforge;
using seedforge::testing::TempDir;

namespace {

SandboxConfig sh_sandbox(const std::filesystem::path& scratch) {
  SandboxConfig config;
  config.interpreter = {"sh"};
  config.script_name = "generator.sh";
  config.scratch_root = scratch;
  config.limits.timeout = std::chrono::seconds(5);
  return config;
}

}  // namespace

TEST(Sandbox, WritesOneFile) {
  TempDir dir;
  Sandbox sandbox(seedforge::testing::python_sandbox(dir.path()));
  auto result = sandbox.execute("open('a.tiff', 'wb').write(b'II*\\x00')\n");
  ASSERT_TRUE(result.ok()) << result.error_excerpt;
  ASSERT_EQ(result.produced_files.size(), 1u);
  EXPECT_EQ(result.produced_files[0].path, "a.tiff");
  EXPECT_GT(result.produced_files[0].size, 0u);
  sandbox.discard(result);
  EXPECT_FALSE(std::filesystem::exists(result.workdir));
}

TEST(Sandbox, RaisingScriptFails) {
  TempDir dir;
  Sandbox sandbox(seedforge::testing::python_sandbox(dir.path()));
  auto result = sandbox.execute("raise ValueError('boom')\n");
  EXPECT_EQ(result.status, ExecStatus::Failure);
  EXPECT_NE(result.error_excerpt.find("boom"), std::string::npos);
}

TEST(Sandbox, TimeoutKeepsPartialFiles) {
  TempDir dir;
  auto config = sh_sandbox(dir.path());
  config.limits.timeout = std::chrono::milliseconds(300);
  Sandbox sandbox(config);
  auto result = sandbox.execute("printf partial > p.tiff\nsleep 30\n");
  EXPECT_EQ(result.status, ExecStatus::Timeout);
  EXPECT_LT(result.duration_seconds, 5.0);
  auto batch = harvest(result.workdir, {"tiff"}, config.limits);
  EXPECT_EQ(batch.seeds.size(), 1u);
}

TEST(Sandbox, MissingInterpreter) {
  TempDir dir;
  auto config = sh_sandbox(dir.path());
  config.interpreter = {"/nonexistent/interpreter"};
  Sandbox sandbox(config);
  try {
    sandbox.execute("true");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InterpreterMissing);
  }
}

TEST(Sandbox, ErrorExcerptKeepsTail) {
  TempDir dir;
  Sandbox sandbox(sh_sandbox(dir.path()));
  auto result = sandbox.execute("i=0; while [ $i -lt 3000 ]; do printf x >&2; i=$((i+1)); done; echo END >&2; exit 3\n");
  EXPECT_EQ(result.exit_code, 3);
  EXPECT_LE(result.error_excerpt.size(), kErrorExcerptChars);
  EXPECT_NE(result.error_excerpt.find("END"), std::string::npos);
}

TEST(Sandbox, ConcurrentRunsAreIsolated) {
  TempDir dir;
  Sandbox sandbox(sh_sandbox(dir.path()));
  std::vector<std::future<ExecutionResult>> runs;
  for (int i = 0; i < 8; ++i) {
    runs.push_back(std::async(std::launch::async, [&sandbox, i] {
      return sandbox.execute("printf 'run" + std::to_string(i) + "' > out.bin\nsleep 0.05\n");
    }));
  }
  std::set<std::filesystem::path> workdirs;
  for (int i = 0; i < 8; ++i) {
    auto result = runs[i].get();
    ASSERT_TRUE(result.ok());
    EXPECT_TRUE(workdirs.insert(result.workdir).second);
    auto batch = harvest(result.workdir, {"bin"}, sandbox.config().limits);
    ASSERT_EQ(batch.seeds.size(), 1u);
    EXPECT_EQ(batch.seeds[0].content, "run" + std::to_string(i));
  }
}

TEST(Sandbox, ScriptLivesOutsideWorkdir) {
  TempDir dir;
  Sandbox sandbox(sh_sandbox(dir.path()));
  auto result = sandbox.execute("ls -A > listing.txt\n");
  ASSERT_TRUE(result.ok());
  auto batch = harvest(result.workdir, {"txt"}, sandbox.config().limits);
  ASSERT_EQ(batch.seeds.size(), 1u);
  EXPECT_EQ(batch.seeds[0].content, "listing.txt\n");
}

TEST(ClassifyError, MissingModule) {
  EXPECT_EQ(classify_error("ModuleNotFoundError: No module named 'tifffile'"),
            ScriptError(MissingModule{"tifffile"}));
}

TEST(ClassifyError, OtherError) {
  EXPECT_TRUE(std::holds_alternative<OtherError>(classify_error("ZeroDivisionError: division by zero")));
}

TEST(ClassifyError, UnquotedModuleIsOther) {
  EXPECT_TRUE(std::holds_alternative<OtherError>(classify_error("ModuleNotFoundError")));
}

TEST(ClassifyError, DottedModuleFromRealTraceback) {
  TempDir dir;
  Sandbox sandbox(seedforge::testing::python_sandbox(dir.path()));
  auto result = sandbox.execute("import seedforge_no_such.sub\n");
  EXPECT_EQ(classify_error(result.error_excerpt), ScriptError(MissingModule{"seedforge_no_such"}));
}

TEST(Harvest, SuffixFilter) {
  TempDir dir;
  write_file_atomic(dir / "a.tiff", "A");
  write_file_atomic(dir / "b.png", "B");
  auto batch = harvest(dir.path(), {"tiff", "tif"}, SandboxLimits{});
  ASSERT_EQ(batch.seeds.size(), 1u);
  EXPECT_EQ(batch.seeds[0].filename, "a.tiff");
}

TEST(Harvest, EmptyWorkdir) {
  TempDir dir;
  EXPECT_TRUE(harvest(dir.path(), {"tiff"}, SandboxLimits{}).seeds.empty());
}

TEST(Harvest, CaseInsensitiveSuffix) {
  TempDir dir;
  write_file_atomic(dir / "x.TIF", "A");
  EXPECT_EQ(harvest(dir.path(), {"tiff", "tif"}, SandboxLimits{}).seeds.size(), 1u);
}

TEST(Harvest, LimitsAndEmptyFiles) {
  TempDir dir;
  SandboxLimits limits;
  limits.max_file_bytes = 4;
  limits.max_files = 3;
  write_file_atomic(dir / "big.bin", "12345");
  write_file_atomic(dir / "empty.bin", "");
  for (int i = 0; i < 5; ++i) write_file_atomic(dir / ("s" + std::to_string(i) + ".bin"), "ok");
  std::filesystem::create_directories(dir / "sub");
  write_file_atomic(dir / "sub" / "n.bin", "n");
  auto batch = harvest(dir.path(), {"bin"}, limits);
  EXPECT_EQ(batch.seeds.size(), 3u);
  for (const auto& s : batch.seeds) {
    EXPECT_LE(s.content.size(), 4u);
    EXPECT_FALSE(s.content.empty());
  }
}

TEST(Harvest, NestedNamesFlattened) {
  TempDir dir;
  std::filesystem::create_directories(dir / "sub");
  write_file_atomic(dir / "sub" / "n.bin", "n");
  auto batch = harvest(dir.path(), {"bin"}, SandboxLimits{});
  ASSERT_EQ(batch.seeds.size(), 1u);
  EXPECT_EQ(batch.seeds[0].filename, "sub_n.bin");
}

TEST(SuffixMap, DefaultsAndFallback) {
  const auto& map = default_suffix_map();
  EXPECT_GE(map.size(), 34u);
  EXPECT_EQ(suffixes_for(map, "TIFF"), (std::vector<std::string>{"tiff", "tif"}));
  EXPECT_EQ(suffixes_for(map, "tiff"), (std::vector<std::string>{"tiff", "tif"}));
  EXPECT_EQ(suffixes_for(map, "FOO"), (std::vector<std::string>{"foo"}));
}
