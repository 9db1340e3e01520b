// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <iostream>

#include "seedforge/campaign.hpp"
#include "seedforge/common/error.hpp"
#include "seedforge/common/log.hpp"

namespace fs = std::filesystem;
using namespace seedforge;

namespace {

void write_reports(const fs::path& dir, const CampaignReport& report) {
  write_file_atomic(dir / "report.json", report.to_json().dump(2) + "\n");
  write_file_atomic(dir / "report.txt", report.to_text());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seedforge: LLM-synthesized input generators for greybox fuzzing"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Log progress");
  app.add_flag("-q,--quiet", quiet, "Only log errors");

  fs::path config_path;
  fs::path out_dir;
  fs::path state_dir;
  std::uint64_t seed = 0;

  auto* run = app.add_subcommand("run", "Run a campaign against a live fuzzer");
  run->add_option("--config", config_path, "Campaign config (JSON)")->required();

  auto* pregenerate = app.add_subcommand("pregenerate", "Run all LLM phases up front and write a seed archive");
  pregenerate->add_option("--config", config_path, "Campaign config (JSON)")->required();
  pregenerate->add_option("--out", out_dir, "Archive directory")->required();

  auto* report = app.add_subcommand("report", "Print the report of a campaign state directory");
  report->add_option("--state", state_dir, "State directory")->required();
  bool as_json = false;
  report->add_flag("--json", as_json, "Print the machine-readable summary");

  auto* simulate = app.add_subcommand("simulate", "Run a campaign against the built-in simulated fuzzer");
  simulate->add_option("--config", config_path, "Campaign config (JSON)")->required();
  simulate->add_option("--seed", seed, "Seed for the simulator and the campaign RNG")->required();

  CLI11_PARSE(app, argc, argv);
  if (verbose) set_log_level(LogLevel::Info);
  if (quiet) set_log_level(LogLevel::Error);

  try {
    if (*report) {
      // The config snapshot tells the report which formats and prices to use.
      auto config = CampaignConfig::from_json(nlohmann::json::parse(read_file(state_dir / "config.json")));
      auto state = load_state(state_dir, fs::path(config.sandbox.script_name).extension().string());
      auto result = build_report(config, state);
      std::cout << (as_json ? result.to_json().dump(2) + "\n" : result.to_text());
      return 0;
    }

    auto config = CampaignConfig::load(config_path);
    if (*run) config.mode = CampaignMode::Live;
    if (*pregenerate) config.mode = CampaignMode::OfflinePregenerate;
    if (*simulate) {
      config.mode = CampaignMode::Simulate;
      config.simulator.seed = seed;
      config.rng_seed = seed;
    }
    config.validate();
    fs::create_directories(config.state_dir);
    write_file_atomic(config.state_dir / "config.json", config.to_json().dump(2) + "\n");

    Campaign campaign(config);
    CampaignReport result;
    if (*pregenerate) {
      result = campaign.pregenerate(out_dir);
      write_reports(out_dir, result);
    } else {
      result = campaign.run();
    }
    std::cout << result.to_text();
    return 0;
  } catch (const Error& e) {
    std::cerr << "seedforge: " << e.what() << "\n";
    return e.kind() == ErrorKind::ConfigError ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "seedforge: " << e.what() << "\n";
    return 1;
  }
}
