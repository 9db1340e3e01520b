// SPDX-License-Identifier: Apache-2.0

#include "seedforge/sim_fuzzer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "seedforge/common/error.hpp"

namespace seedforge {

namespace fs = std::filesystem;

BytePredicate BytePredicate::from_json(const nlohmann::json& json) {
  if (!json.is_object() || json.size() != 1) throw Error(ErrorKind::ConfigError, "edge predicate: " + json.dump());
  BytePredicate p;
  const auto& [key, value] = *json.items().begin();
  try {
    if (key == "contains") {
      p.kind_ = Kind::Contains;
      p.needle_ = value.get<std::string>();
    } else if (key == "contains_hex") {
      p.kind_ = Kind::Contains;
      p.needle_ = from_hex(value.get<std::string>());
    } else if (key == "byte_eq" || key == "byte_ne") {
      p.kind_ = key == "byte_eq" ? Kind::ByteEq : Kind::ByteNe;
      p.offset_ = value.at(0).get<std::size_t>();
      p.value_ = value.at(1).get<std::uint8_t>();
    } else if (key == "min_len") {
      p.kind_ = Kind::MinLen;
      p.offset_ = value.get<std::size_t>();
    } else if (key == "all_of") {
      p.kind_ = Kind::AllOf;
      for (const auto& child : value) p.children_.push_back(from_json(child));
    } else {
      throw Error(ErrorKind::ConfigError, "unknown edge predicate '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, "edge predicate '" + key + "': " + e.what());
  }
  if (p.kind_ == Kind::Contains && p.needle_.empty()) throw Error(ErrorKind::ConfigError, "empty needle");
  return p;
}

nlohmann::json BytePredicate::to_json() const {
  switch (kind_) {
    case Kind::Contains: return {{"contains_hex", to_hex(needle_)}};
    case Kind::ByteEq: return {{"byte_eq", {offset_, value_}}};
    case Kind::ByteNe: return {{"byte_ne", {offset_, value_}}};
    case Kind::MinLen: return {{"min_len", offset_}};
    case Kind::AllOf: {
      auto list = nlohmann::json::array();
      for (const auto& c : children_) list.push_back(c.to_json());
      return {{"all_of", list}};
    }
  }
  return nullptr;
}

bool BytePredicate::matches(std::string_view input) const {
  switch (kind_) {
    case Kind::Contains: return input.find(needle_) != std::string_view::npos;
    case Kind::ByteEq:
      return offset_ < input.size() && static_cast<std::uint8_t>(input[offset_]) == value_;
    case Kind::ByteNe:
      return offset_ < input.size() && static_cast<std::uint8_t>(input[offset_]) != value_;
    case Kind::MinLen: return input.size() >= offset_;
    case Kind::AllOf:
      return std::all_of(children_.begin(), children_.end(), [&](const auto& c) { return c.matches(input); });
  }
  return false;
}

SimTarget SimTarget::from_json(const nlohmann::json& json) {
  SimTarget target;
  std::set<std::uint32_t> ids;
  try {
    for (const auto& edge : json.at("edges")) {
      EdgeRule rule{edge.at("id").get<std::uint32_t>(), BytePredicate::from_json(edge.at("when"))};
      if (!ids.insert(rule.id).second) throw Error(ErrorKind::ConfigError, "duplicate edge id");
      target.rules_.push_back(std::move(rule));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("simulated target: ") + e.what());
  }
  return target;
}

nlohmann::json SimTarget::to_json() const {
  auto edges = nlohmann::json::array();
  for (const auto& rule : rules_) edges.push_back({{"id", rule.id}, {"when", rule.predicate.to_json()}});
  return {{"edges", edges}};
}

std::set<std::uint32_t> SimTarget::run(std::string_view input) const {
  std::set<std::uint32_t> hit;
  for (const auto& rule : rules_) {
    if (rule.predicate.matches(input)) hit.insert(rule.id);
  }
  return hit;
}

SimulatedFuzzer::SimulatedFuzzer(SimTarget target, fs::path corpus_dir, std::uint64_t seed, double exec_seconds)
    : target_(std::move(target)), corpus_dir_(std::move(corpus_dir)), exec_seconds_(exec_seconds), rng_(seed) {
  if (!(exec_seconds_ > 0)) throw Error(ErrorKind::ConfigError, "exec_seconds must be positive");
}

std::int64_t SimulatedFuzzer::now() const {
  return kEpoch + static_cast<std::int64_t>(std::floor(static_cast<double>(execs_) * exec_seconds_));
}

CoverageSnapshot SimulatedFuzzer::snapshot() const {
  return CoverageSnapshot{covered_.size(), execs_, last_find_, queue_.size()};
}

void SimulatedFuzzer::add_initial(const std::string& name, const std::string& content, ProvenanceIndex& index) {
  index.add(name, ProvenanceEntry{ProvenanceClass::Initial, {}, {}, sha256_hex(content)});
  auto edges = target_.run(content);
  covered_.insert(edges.begin(), edges.end());
  queue_.push_back(SimQueueEntry{name, content});
}

std::vector<NewFind> SimulatedFuzzer::import_corpus(ProvenanceIndex& index) {
  std::vector<NewFind> finds;
  if (!fs::is_directory(corpus_dir_)) return finds;
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(corpus_dir_)) {
    if (!entry.is_regular_file()) continue;
    auto name = entry.path().filename().string();
    if (name.front() == '.' || imported_.count(name) != 0) continue;
    names.push_back(std::move(name));
  }
  std::sort(names.begin(), names.end());
  for (const auto& name : names) {
    imported_.insert(name);
    auto content = read_file(corpus_dir_ / name);
    if (index.find(name) == nullptr) {
      index.add(name, ProvenanceEntry{ProvenanceClass::Fuzzer, {}, {}, sha256_hex(content)});
    }
    auto edges = target_.run(content);
    bool fresh = false;
    for (auto e : edges) fresh |= covered_.insert(e).second;
    if (fresh) {
      queue_.push_back(SimQueueEntry{name, std::move(content)});
      last_find_ = now();
      finds.push_back(NewFind{name, ""});
    }
  }
  return finds;
}

std::string SimulatedFuzzer::mutate(const std::string& input) {
  std::string out = input;
  const std::size_t ops = 1 + rng_.index(4);
  for (std::size_t i = 0; i < ops; ++i) {
    const auto byte = static_cast<char>(rng_.index(256));
    switch (rng_.index(4)) {
      case 0:
      case 1:
        if (!out.empty()) out[rng_.index(out.size())] = byte;
        break;
      case 2:
        if (out.size() < 4096) out.insert(out.begin() + static_cast<std::ptrdiff_t>(rng_.index(out.size() + 1)), byte);
        break;
      default:
        if (out.size() > 1) out.erase(out.begin() + static_cast<std::ptrdiff_t>(rng_.index(out.size())));
        break;
    }
  }
  return out;
}

std::vector<NewFind> SimulatedFuzzer::advance(std::uint64_t execs, ProvenanceIndex& index) {
  auto finds = import_corpus(index);
  if (queue_.empty()) {
    execs_ += execs;
    return finds;
  }
  for (std::uint64_t i = 0; i < execs; ++i) {
    cursor_ %= queue_.size();
    const std::size_t parent = cursor_++;
    auto candidate = mutate(queue_[parent].content);
    ++execs_;
    auto edges = target_.run(candidate);
    bool fresh = false;
    for (auto e : edges) fresh |= covered_.insert(e).second;
    if (!fresh) continue;
    char name[32];
    std::snprintf(name, sizeof name, "sim_%06llu", static_cast<unsigned long long>(next_id_++));
    index.add(name, ProvenanceEntry{ProvenanceClass::Fuzzer, {}, queue_[parent].name, sha256_hex(candidate)});
    finds.push_back(NewFind{name, queue_[parent].name});
    queue_.push_back(SimQueueEntry{name, std::move(candidate)});
    last_find_ = now();
  }
  return finds;
}

nlohmann::json SimulatedFuzzer::save() const {
  auto queue = nlohmann::json::array();
  for (const auto& e : queue_) queue.push_back({{"name", e.name}, {"content_hex", to_hex(e.content)}});
  return {{"rng", rng_.save()},          {"queue", queue},          {"covered", covered_},
          {"imported", imported_},       {"execs", execs_},         {"next_id", next_id_},
          {"cursor", cursor_},           {"last_find", last_find_}};
}

void SimulatedFuzzer::load(const nlohmann::json& state) {
  try {
    rng_.load(state.at("rng").get<std::string>());
    queue_.clear();
    for (const auto& e : state.at("queue")) {
      queue_.push_back(SimQueueEntry{e.at("name").get<std::string>(), from_hex(e.at("content_hex").get<std::string>())});
    }
    covered_ = state.at("covered").get<std::set<std::uint32_t>>();
    imported_ = state.at("imported").get<std::set<std::string>>();
    execs_ = state.at("execs").get<std::uint64_t>();
    next_id_ = state.at("next_id").get<std::uint64_t>();
    cursor_ = state.at("cursor").get<std::size_t>();
    last_find_ = state.at("last_find").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptState, std::string("simulator state: ") + e.what());
  }
}

}  // namespace seedforge
