// SPDX-License-Identifier: Apache-2.0

#include "seedforge/fuzzer_bridge.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include <nlohmann/json.hpp>

#include "seedforge/common/error.hpp"
#include "seedforge/common/util.hpp"

namespace seedforge {

namespace fs = std::filesystem;

namespace {

template <typename T>
std::optional<T> parse_number(std::string_view text) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

bool is_hex(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
}

}  // namespace

CoverageSnapshot parse_stats(std::string_view stats_text, const StatsKeyMap& keys) {
  std::map<std::string, std::string, std::less<>> values;
  for (const auto& line : split_lines(stats_text)) {
    auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    values[trim(std::string_view(line).substr(0, colon))] = trim(std::string_view(line).substr(colon + 1));
  }
  auto required = [&](const std::string& key) -> std::int64_t {
    auto it = values.find(key);
    if (it == values.end()) throw Error(ErrorKind::MalformedStats, "missing key '" + key + "'");
    // AFL++ writes some counters as floats or with a trailing '%'.
    std::string_view text = it->second;
    auto dot = text.find('.');
    if (dot != std::string_view::npos) text = text.substr(0, dot);
    auto value = parse_number<std::int64_t>(text);
    if (!value || *value < 0) throw Error(ErrorKind::MalformedStats, "bad value for '" + key + "'");
    return *value;
  };

  CoverageSnapshot snapshot;
  snapshot.edges_found = static_cast<std::uint64_t>(required(keys.edges_found));
  snapshot.execs_done = static_cast<std::uint64_t>(required(keys.execs_done));
  snapshot.last_find_unix = required(keys.last_find);
  snapshot.queue_size = static_cast<std::uint64_t>(required(keys.queue_size));
  if (snapshot.last_find_unix == 0 && values.count(keys.start_time) != 0) {
    snapshot.last_find_unix = required(keys.start_time);
  }
  return snapshot;
}

std::string_view to_string(FuzzState state) noexcept {
  switch (state) {
    case FuzzState::Init: return "init";
    case FuzzState::Progress: return "progress";
    case FuzzState::Stall: return "stall";
  }
  return "";
}

FuzzState poll_state(const CoverageSnapshot& snapshot, std::int64_t now_unix, std::int64_t stall_threshold_secs,
                     bool first_poll) {
  if (first_poll) return FuzzState::Init;
  return now_unix - snapshot.last_find_unix > stall_threshold_secs ? FuzzState::Stall : FuzzState::Progress;
}

std::string_view to_string(ProvenanceClass c) noexcept {
  switch (c) {
    case ProvenanceClass::Initial: return "initial";
    case ProvenanceClass::Synthesis: return "synthesis";
    case ProvenanceClass::Mutation: return "mutation";
    case ProvenanceClass::Fuzzer: return "fuzzer";
  }
  return "";
}

std::string_view to_string(AttributionClass c) noexcept {
  switch (c) {
    case AttributionClass::Initial: return "initial";
    case AttributionClass::Synthesis: return "synthesis";
    case AttributionClass::Mutation: return "mutation";
    case AttributionClass::Unknown: return "fuzzer-origin-unknown";
  }
  return "";
}

namespace {
std::optional<ProvenanceClass> provenance_class_from_string(std::string_view s) {
  for (auto c : {ProvenanceClass::Initial, ProvenanceClass::Synthesis, ProvenanceClass::Mutation,
                 ProvenanceClass::Fuzzer}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}
}  // namespace

bool ProvenanceIndex::add(const std::string& filename, ProvenanceEntry entry) {
  if (entries_.count(filename) != 0) return false;
  if (entry.origin != ProvenanceClass::Fuzzer && !entry.content_hash.empty()) {
    by_content_.emplace(entry.content_hash, filename);
  }
  entries_.emplace(filename, std::move(entry));
  return true;
}

const ProvenanceEntry* ProvenanceIndex::find(std::string_view filename) const {
  auto it = entries_.find(filename);
  return it == entries_.end() ? nullptr : &it->second;
}

const std::string* ProvenanceIndex::find_content(std::string_view content_hash) const {
  auto it = by_content_.find(content_hash);
  return it == by_content_.end() ? nullptr : &it->second;
}

std::string ProvenanceIndex::serialize() const {
  std::string out;
  for (const auto& [name, entry] : entries_) {
    out += nlohmann::json{{"name", name},
                          {"origin", std::string(to_string(entry.origin))},
                          {"generator", entry.generator_id},
                          {"parent", entry.parent},
                          {"sha256", entry.content_hash}}
               .dump();
    out += '\n';
  }
  return out;
}

ProvenanceIndex ProvenanceIndex::parse(std::string_view text) {
  ProvenanceIndex index;
  try {
    for (const auto& line : split_lines(text)) {
      if (line.empty()) continue;
      auto json = nlohmann::json::parse(line);
      auto origin = provenance_class_from_string(json.at("origin").get<std::string>());
      if (!origin) throw Error(ErrorKind::CorruptState, "unknown provenance class");
      ProvenanceEntry entry{*origin, json.at("generator").get<std::string>(),
                            json.at("parent").get<std::string>(), json.at("sha256").get<std::string>()};
      if (!index.add(json.at("name").get<std::string>(), std::move(entry))) {
        throw Error(ErrorKind::CorruptState, "duplicate provenance entry");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptState, std::string("provenance index: ") + e.what());
  }
  return index;
}

std::string make_corpus_name(const CorpusName& name) {
  std::string out = "gen_" + name.generator_id16 + "_" + std::to_string(name.ordinal) + "_" + name.hash8;
  if (!name.suffix.empty()) out += "." + name.suffix;
  return out;
}

std::optional<CorpusName> parse_corpus_name(std::string_view filename) {
  if (filename.substr(0, 4) != "gen_") return std::nullopt;
  std::string_view rest = filename.substr(4);
  CorpusName name;
  auto dot = rest.find('.');
  if (dot != std::string_view::npos) {
    name.suffix = std::string(rest.substr(dot + 1));
    rest = rest.substr(0, dot);
  }
  auto first = rest.find('_');
  auto last = rest.rfind('_');
  if (first == std::string_view::npos || first == last) return std::nullopt;
  auto id = rest.substr(0, first);
  auto ordinal = rest.substr(first + 1, last - first - 1);
  auto hash = rest.substr(last + 1);
  if (id.size() != 16 || !is_hex(id) || hash.size() != 8 || !is_hex(hash)) return std::nullopt;
  auto ord = parse_number<std::size_t>(ordinal);
  if (!ord) return std::nullopt;
  name.generator_id16 = std::string(id);
  name.ordinal = *ord;
  name.hash8 = std::string(hash);
  return name;
}

std::vector<std::string> inject(const SeedBatch& batch, const fs::path& corpus_dir, ProvenanceIndex& index) {
  if (!fs::is_directory(corpus_dir)) throw Error(ErrorKind::IoError, "no corpus directory " + corpus_dir.string());
  ProvenanceClass origin = ProvenanceClass::Synthesis;
  if (batch.phase == SeedPhase::Mutation) origin = ProvenanceClass::Mutation;
  if (batch.phase == SeedPhase::Initial) origin = ProvenanceClass::Initial;
  const std::string id16 =
      batch.generator_id.empty() ? std::string(16, '0') : batch.generator_id.substr(0, 16);

  std::vector<std::string> written;
  for (std::size_t ordinal = 0; ordinal < batch.seeds.size(); ++ordinal) {
    const auto& seed = batch.seeds[ordinal];
    const auto hash = sha256_hex(seed.content);
    if (index.find_content(hash) != nullptr) continue;
    auto suffix = to_lower(fs::path(seed.filename).extension().string());
    if (!suffix.empty()) suffix.erase(0, 1);
    const auto name = make_corpus_name(CorpusName{id16, ordinal, hash.substr(0, 8), suffix});
    try {
      write_file_atomic(corpus_dir / name, seed.content);
    } catch (const Error& e) {
      throw Error(ErrorKind::IoError, e.detail());
    }
    index.add(name, ProvenanceEntry{origin, batch.generator_id, {}, hash});
    written.push_back(name);
    fault_point("bridge.inject");
  }
  return written;
}

std::uint64_t AttributionCounts::operator[](AttributionClass c) const {
  auto it = counts.find(c);
  return it == counts.end() ? 0 : it->second;
}

std::uint64_t AttributionCounts::total() const {
  std::uint64_t sum = 0;
  for (const auto& [c, n] : counts) sum += n;
  return sum;
}

AttributionCounts& AttributionCounts::operator+=(const AttributionCounts& other) {
  for (const auto& [c, n] : other.counts) counts[c] += n;
  return *this;
}

AttributionClass resolve_provenance(const ProvenanceIndex& index, std::string_view entry, std::string* generator_id) {
  std::string cursor(entry);
  for (std::size_t depth = 0; depth <= kMaxProvenanceDepth; ++depth) {
    const auto* found = index.find(cursor);
    if (found == nullptr) return AttributionClass::Unknown;
    switch (found->origin) {
      case ProvenanceClass::Initial: return AttributionClass::Initial;
      case ProvenanceClass::Synthesis:
        if (generator_id) *generator_id = found->generator_id;
        return AttributionClass::Synthesis;
      case ProvenanceClass::Mutation:
        if (generator_id) *generator_id = found->generator_id;
        return AttributionClass::Mutation;
      case ProvenanceClass::Fuzzer:
        if (found->parent.empty()) return AttributionClass::Unknown;
        cursor = found->parent;
        break;
    }
  }
  return AttributionClass::Unknown;
}

AttributionCounts attribute(const std::vector<NewFind>& report, const ProvenanceIndex& index,
                            const std::function<void(const std::string&)>& on_mutation_hit) {
  AttributionCounts result;
  for (const auto& find : report) {
    std::string generator;
    auto cls = resolve_provenance(index, find.entry, &generator);
    // An entry the index has never seen may still name a known source.
    if (cls == AttributionClass::Unknown && index.find(find.entry) == nullptr && !find.source.empty()) {
      cls = resolve_provenance(index, find.source, &generator);
    }
    ++result.counts[cls];
    if (cls == AttributionClass::Mutation && on_mutation_hit) on_mutation_hit(generator);
  }
  return result;
}

std::optional<AflQueueName> parse_afl_queue_name(std::string_view filename) {
  if (filename.substr(0, 3) != "id:") return std::nullopt;
  AflQueueName name;
  std::size_t start = 0;
  bool have_id = false;
  while (start <= filename.size()) {
    auto comma = filename.find(',', start);
    auto field = filename.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    if (field.substr(0, 3) == "id:") {
      auto id = parse_number<std::uint64_t>(field.substr(3));
      if (!id) return std::nullopt;
      name.id = *id;
      have_id = true;
    } else if (field.substr(0, 4) == "src:") {
      // Splices list two sources ("src:000012+000034"); the first is the base.
      auto src = field.substr(4);
      src = src.substr(0, src.find('+'));
      name.source = parse_number<std::uint64_t>(src);
    } else if (field.substr(0, 5) == "orig:") {
      name.orig = std::string(field.substr(5));
      // orig names may contain commas; they run to the end.
      if (comma != std::string_view::npos) name.orig = std::string(filename.substr(start + 5));
      break;
    } else if (field == "+cov") {
      name.new_coverage = true;
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (!have_id) return std::nullopt;
  return name;
}

std::vector<NewFind> AflQueueWatcher::scan(ProvenanceIndex& index) {
  std::vector<NewFind> finds;
  if (!fs::is_directory(queue_dir_)) return finds;
  std::map<std::uint64_t, std::pair<std::string, AflQueueName>> fresh;
  for (const auto& entry : fs::directory_iterator(queue_dir_)) {
    if (!entry.is_regular_file()) continue;
    auto filename = entry.path().filename().string();
    auto parsed = parse_afl_queue_name(filename);
    if (!parsed || by_id_.count(parsed->id) != 0) continue;
    fresh.emplace(parsed->id, std::make_pair(filename, *parsed));
  }
  for (auto& [id, item] : fresh) {
    auto& [filename, parsed] = item;
    by_id_[id] = filename;
    const auto hash = sha256_hex(read_file(queue_dir_ / filename));
    ProvenanceEntry provenance{ProvenanceClass::Fuzzer, {}, {}, hash};
    std::string source;
    if (const auto* injected = index.find_content(hash)) {
      provenance.parent = *injected;
    } else if (!parsed.orig.empty() && !parsed.source) {
      provenance.origin = ProvenanceClass::Initial;
    } else if (parsed.source) {
      auto parent = by_id_.find(*parsed.source);
      if (parent != by_id_.end()) provenance.parent = parent->second;
      source = provenance.parent;
    }
    index.add(filename, provenance);
    if (parsed.new_coverage) finds.push_back(NewFind{filename, source});
  }
  return finds;
}

}  // namespace seedforge
