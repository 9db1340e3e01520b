// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>

#include "seedforge/campaign.hpp"
#include "seedforge/common/error.hpp"

namespace seedforge {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(CampaignMode mode) noexcept {
  switch (mode) {
    case CampaignMode::Live: return "live";
    case CampaignMode::OfflinePregenerate: return "offline_pregenerate";
    case CampaignMode::Simulate: return "simulate";
  }
  return "";
}

namespace {

CampaignMode mode_from_string(const std::string& s) {
  if (s == "live") return CampaignMode::Live;
  if (s == "offline_pregenerate" || s == "pregenerate") return CampaignMode::OfflinePregenerate;
  if (s == "simulate") return CampaignMode::Simulate;
  throw Error(ErrorKind::ConfigError, "unknown mode '" + s + "'");
}

fs::path resolve(const json& value, const fs::path& base) {
  fs::path p = value.get<std::string>();
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

void read_path(const json& j, const char* key, fs::path& out, const fs::path& base) {
  if (j.contains(key) && !j.at(key).is_null()) out = resolve(j.at(key), base);
}

std::string seed_content(const json& seed) {
  if (seed.contains("hex")) return from_hex(seed.at("hex").get<std::string>());
  if (seed.contains("text")) return seed.at("text").get<std::string>();
  if (seed.contains("zeros")) return std::string(seed.at("zeros").get<std::size_t>(), '\0');
  throw Error(ErrorKind::ConfigError, "initial seed needs one of hex, text, zeros");
}

}  // namespace

CampaignConfig CampaignConfig::from_json(const json& j, const fs::path& base) {
  CampaignConfig c;
  try {
    read(j, "formats", c.formats);
    if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
    read_path(j, "state_dir", c.state_dir, base);

    if (j.contains("llm")) {
      const auto& l = j.at("llm");
      read(l, "backend", c.llm.backend);
      read_path(l, "mock_script", c.llm.mock_script, base);
      read(l, "base_url", c.llm.base_url);
      read(l, "path", c.llm.path);
      read(l, "model", c.llm.model);
      read(l, "api_key_env", c.llm.api_key_env);
      read(l, "temperature", c.llm.temperature);
      read(l, "max_tokens", c.llm.max_tokens);
      read(l, "retries", c.llm.retries);
      read(l, "timeout_secs", c.llm.timeout_secs);
      if (l.contains("token_budget") && !l.at("token_budget").is_null()) {
        c.llm.token_budget = l.at("token_budget").get<std::uint64_t>();
      }
      if (l.contains("cost_budget") && !l.at("cost_budget").is_null()) {
        c.llm.cost_budget = l.at("cost_budget").get<double>();
      }
      if (l.contains("prices")) {
        for (const auto& [model, price] : l.at("prices").items()) {
          c.llm.prices[model] = llm::Price{price.at("prompt").get<double>(), price.at("completion").get<double>()};
        }
      }
      read_path(l, "templates_dir", c.llm.templates_dir, base);
    }

    if (j.contains("synthesis")) {
      const auto& s = j.at("synthesis");
      read(s, "init_max", c.synthesis.init_max);
      read(s, "debug_max", c.synthesis.debug_max);
      read(s, "max_install", c.synthesis.max_install);
    }

    if (j.contains("installer")) {
      const auto& i = j.at("installer");
      read(i, "enabled", c.installer.enabled);
      read(i, "command", c.installer.command);
      read(i, "dry_run", c.installer.dry_run);
      read(i, "timeout_secs", c.installer.timeout_secs);
      if (i.contains("allowlist") && !i.at("allowlist").is_null()) {
        c.installer.allowlist = i.at("allowlist").get<std::set<std::string>>();
      }
    }

    if (j.contains("sandbox")) {
      const auto& s = j.at("sandbox");
      read(s, "interpreter", c.sandbox.interpreter);
      read(s, "script_name", c.sandbox.script_name);
      read(s, "timeout_secs", c.sandbox.timeout_secs);
      read(s, "max_file_bytes", c.sandbox.max_file_bytes);
      read(s, "max_files", c.sandbox.max_files);
      read(s, "keep_artifacts", c.sandbox.keep_artifacts);
      read(s, "env", c.sandbox.env);
    }

    if (j.contains("suffixes")) {
      for (const auto& [format, list] : j.at("suffixes").items()) {
        c.suffixes[format] = list.get<std::vector<std::string>>();
      }
    }

    if (j.contains("fuzzer")) {
      const auto& f = j.at("fuzzer");
      read(f, "stall_threshold_secs", c.fuzzer.stall_threshold_secs);
      read(f, "poll_interval_secs", c.fuzzer.poll_interval_secs);
      read_path(f, "corpus_dir", c.fuzzer.corpus_dir, base);
      read_path(f, "stats_file", c.fuzzer.stats_file, base);
      read_path(f, "queue_dir", c.fuzzer.queue_dir, base);
      read(f, "command", c.fuzzer.command);
      read(f, "wall_clock_secs", c.fuzzer.wall_clock_secs);
      if (f.contains("stats_keys")) {
        const auto& k = f.at("stats_keys");
        read(k, "edges_found", c.fuzzer.stats_keys.edges_found);
        read(k, "execs_done", c.fuzzer.stats_keys.execs_done);
        read(k, "last_find", c.fuzzer.stats_keys.last_find);
        read(k, "queue_size", c.fuzzer.stats_keys.queue_size);
        read(k, "start_time", c.fuzzer.stats_keys.start_time);
      }
    }

    if (j.contains("simulator")) {
      const auto& s = j.at("simulator");
      read(s, "target", c.simulator.target);
      read(s, "exec_seconds", c.simulator.exec_seconds);
      read(s, "max_execs", c.simulator.max_execs);
      read(s, "seed", c.simulator.seed);
      if (s.contains("initial_seeds")) {
        for (const auto& seed : s.at("initial_seeds")) {
          c.simulator.initial_seeds.push_back(InitialSeed{seed.at("name").get<std::string>(), seed_content(seed)});
        }
      }
    }

    read(j, "mutations_per_stall", c.mutations_per_stall);
    read(j, "max_features", c.max_features);
    read(j, "rng_seed", c.rng_seed);
    if (j.contains("archive") && !j.at("archive").is_null()) c.archive = resolve(j.at("archive"), base);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
  return c;
}

CampaignConfig CampaignConfig::load(const fs::path& file) {
  std::string text;
  try {
    text = read_file(file);
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigError, "cannot read config " + file.string());
  }
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, file.string() + ": " + e.what());
  }
  return from_json(j, fs::absolute(file).parent_path());
}

json CampaignConfig::to_json() const {
  json prices = json::object();
  for (const auto& [model, p] : llm.prices) prices[model] = {{"prompt", p.prompt}, {"completion", p.completion}};
  json seeds = json::array();
  for (const auto& s : simulator.initial_seeds) seeds.push_back({{"name", s.name}, {"hex", to_hex(s.content)}});

  json j;
  j["formats"] = formats;
  j["mode"] = std::string(to_string(mode));
  j["state_dir"] = state_dir.string();
  j["llm"] = {{"backend", llm.backend},
              {"mock_script", llm.mock_script.string()},
              {"base_url", llm.base_url},
              {"path", llm.path},
              {"model", llm.model},
              {"api_key_env", llm.api_key_env},
              {"temperature", llm.temperature},
              {"max_tokens", llm.max_tokens},
              {"retries", llm.retries},
              {"timeout_secs", llm.timeout_secs},
              {"token_budget", llm.token_budget ? json(*llm.token_budget) : json(nullptr)},
              {"cost_budget", llm.cost_budget ? json(*llm.cost_budget) : json(nullptr)},
              {"prices", prices},
              {"templates_dir", llm.templates_dir.string()}};
  j["synthesis"] = {{"init_max", synthesis.init_max},
                    {"debug_max", synthesis.debug_max},
                    {"max_install", synthesis.max_install}};
  j["installer"] = {{"enabled", installer.enabled},
                    {"command", installer.command},
                    {"allowlist", installer.allowlist ? json(*installer.allowlist) : json(nullptr)},
                    {"dry_run", installer.dry_run},
                    {"timeout_secs", installer.timeout_secs}};
  j["sandbox"] = {{"interpreter", sandbox.interpreter},
                  {"script_name", sandbox.script_name},
                  {"timeout_secs", sandbox.timeout_secs},
                  {"max_file_bytes", sandbox.max_file_bytes},
                  {"max_files", sandbox.max_files},
                  {"keep_artifacts", sandbox.keep_artifacts},
                  {"env", sandbox.env}};
  j["suffixes"] = suffixes;
  j["fuzzer"] = {{"stall_threshold_secs", fuzzer.stall_threshold_secs},
                 {"poll_interval_secs", fuzzer.poll_interval_secs},
                 {"corpus_dir", fuzzer.corpus_dir.string()},
                 {"stats_file", fuzzer.stats_file.string()},
                 {"queue_dir", fuzzer.queue_dir.string()},
                 {"command", fuzzer.command},
                 {"wall_clock_secs", fuzzer.wall_clock_secs},
                 {"stats_keys",
                  {{"edges_found", fuzzer.stats_keys.edges_found},
                   {"execs_done", fuzzer.stats_keys.execs_done},
                   {"last_find", fuzzer.stats_keys.last_find},
                   {"queue_size", fuzzer.stats_keys.queue_size},
                   {"start_time", fuzzer.stats_keys.start_time}}}};
  j["simulator"] = {{"target", simulator.target},
                    {"initial_seeds", seeds},
                    {"exec_seconds", simulator.exec_seconds},
                    {"max_execs", simulator.max_execs},
                    {"seed", simulator.seed}};
  j["mutations_per_stall"] = mutations_per_stall;
  j["max_features"] = max_features;
  j["rng_seed"] = rng_seed;
  j["archive"] = archive ? json(archive->string()) : json(nullptr);
  return j;
}

void CampaignConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::ConfigError, what); };
  if (formats.empty()) fail("at least one format is required");
  std::set<std::string> seen;
  for (const auto& f : formats) {
    if (trim(f).empty()) fail("empty format name");
    if (!seen.insert(to_upper(trim(f))).second) fail("format listed twice: " + f);
  }
  if (state_dir.empty()) fail("state_dir is required");
  synthesis.validate();
  if (llm.backend == "mock") {
    if (llm.mock_script.empty()) fail("llm.mock_script is required for the mock backend");
  } else if (llm.backend == "http") {
    if (llm.base_url.empty() || llm.model.empty()) fail("llm.base_url and llm.model are required");
    if (llm.api_key_env.empty() || std::getenv(llm.api_key_env.c_str()) == nullptr) {
      fail("API key variable '" + llm.api_key_env + "' is not set");
    }
  } else {
    fail("unknown llm.backend '" + llm.backend + "'");
  }
  if (llm.max_tokens <= 0) fail("llm.max_tokens must be positive");
  if (llm.retries < 0) fail("llm.retries must be >= 0");
  if (llm.cost_budget && *llm.cost_budget < 0) fail("llm.cost_budget must be >= 0");
  for (const auto& [model, p] : llm.prices) {
    if (p.prompt < 0 || p.completion < 0) fail("negative price for " + model);
  }
  if (sandbox.interpreter.empty()) fail("sandbox.interpreter is empty");
  if (sandbox.script_name.empty() || sandbox.script_name.find('/') != std::string::npos) {
    fail("sandbox.script_name must be a plain file name");
  }
  if (!(sandbox.timeout_secs > 0) || sandbox.max_files == 0 || sandbox.max_file_bytes == 0) {
    fail("sandbox limits must be positive");
  }
  if (installer.enabled && installer.command.empty()) fail("installer.command is empty");
  if (fuzzer.stall_threshold_secs <= 0 || fuzzer.poll_interval_secs <= 0) {
    fail("stall threshold and poll interval must be positive");
  }
  if (mutations_per_stall == 0) fail("mutations_per_stall must be >= 1");

  if (mode == CampaignMode::Simulate) {
    if (!(simulator.exec_seconds > 0)) fail("simulator.exec_seconds must be positive");
    if (simulator.max_execs == 0) fail("simulator.max_execs must be positive");
    SimTarget::from_json(simulator.target);
  }
  if (mode == CampaignMode::Live) {
    if (fuzzer.corpus_dir.empty() || fuzzer.stats_file.empty() || fuzzer.queue_dir.empty()) {
      fail("live mode needs fuzzer.corpus_dir, fuzzer.stats_file and fuzzer.queue_dir");
    }
    if (fuzzer.wall_clock_secs <= 0) fail("fuzzer.wall_clock_secs must be positive");
  }
  std::set<fs::path> paths{state_dir};
  for (const auto& p : {fuzzer.corpus_dir, fuzzer.queue_dir}) {
    if (!p.empty() && !paths.insert(p).second) fail("state, corpus and queue paths must be distinct");
  }
}

}  // namespace seedforge
