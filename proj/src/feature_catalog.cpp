// SPDX-License-Identifier: Apache-2.0

#include "seedforge/feature_catalog.hpp"

#include <algorithm>
#include <cctype>

#include "seedforge/common/error.hpp"
#include "seedforge/common/util.hpp"

namespace seedforge {

std::string_view to_string(FeatureOrigin origin) noexcept {
  return origin == FeatureOrigin::Initial ? "initial" : "rare";
}

std::string Feature::label() const { return description.empty() ? name : name + ": " + description; }

std::string normalize_feature_name(std::string_view name) {
  std::string out;
  bool pending_space = false;
  for (char c : name) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

namespace {

std::string strip_markup(std::string_view s) {
  std::string out = trim(s);
  auto strip = [&out](std::string_view token) {
    while (out.size() >= 2 * token.size() && out.compare(0, token.size(), token) == 0 &&
           out.compare(out.size() - token.size(), token.size(), token) == 0) {
      out = trim(std::string_view(out).substr(token.size(), out.size() - 2 * token.size()));
    }
  };
  strip("**");
  strip("*");
  strip("`");
  strip("\"");
  // "**Name**: ..." leaves a dangling marker once the colon split happens.
  while (out.size() >= 2 && out.compare(0, 2, "**") == 0) out = trim(std::string_view(out).substr(2));
  while (out.size() >= 2 && out.compare(out.size() - 2, 2, "**") == 0) {
    out = trim(std::string_view(out).substr(0, out.size() - 2));
  }
  return out;
}

}  // namespace

std::vector<ListItem> parse_numbered_list(std::string_view text) {
  std::vector<ListItem> items;
  for (const auto& raw : split_lines(text)) {
    std::string line = trim(raw);
    std::size_t digits = 0;
    while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) ++digits;
    if (digits == 0 || digits + 1 >= line.size()) continue;
    if (line[digits] != '.' && line[digits] != ')') continue;
    if (!std::isspace(static_cast<unsigned char>(line[digits + 1]))) continue;
    std::string_view rest = std::string_view(line).substr(digits + 2);

    auto colon = rest.find(':');
    auto dash = rest.find(" - ");
    std::size_t split = std::min(colon, dash);
    ListItem item;
    if (split == std::string_view::npos) {
      item.name = strip_markup(rest);
    } else {
      item.name = strip_markup(rest.substr(0, split));
      item.description = trim(rest.substr(split + (split == colon ? 1 : 3)));
    }
    if (!item.name.empty()) items.push_back(std::move(item));
  }
  return items;
}

bool FeatureDB::add(Feature feature) {
  if (trim(feature.name).empty()) throw Error(ErrorKind::UnparseableReply, "empty feature name");
  if (contains(feature.format, feature.name)) return false;
  entries_.push_back(std::move(feature));
  return true;
}

const Feature* FeatureDB::find(std::string_view format, std::string_view name) const {
  const auto key = normalize_feature_name(name);
  for (const auto& entry : entries_) {
    if (entry.format == format && normalize_feature_name(entry.name) == key) return &entry;
  }
  return nullptr;
}

bool FeatureDB::contains(std::string_view format, std::string_view name) const {
  return find(format, name) != nullptr;
}

std::vector<Feature> FeatureDB::features(std::string_view format) const {
  std::vector<Feature> out;
  for (const auto& entry : entries_) {
    if (entry.format == format) out.push_back(entry);
  }
  return out;
}

std::vector<std::string> FeatureDB::formats() const {
  std::vector<std::string> out;
  for (const auto& entry : entries_) {
    if (std::find(out.begin(), out.end(), entry.format) == out.end()) out.push_back(entry.format);
  }
  return out;
}

std::size_t FeatureDB::size(std::string_view format) const {
  return static_cast<std::size_t>(std::count_if(
      entries_.begin(), entries_.end(), [&](const Feature& f) { return f.format == format; }));
}

namespace {

std::string escape_field(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_field(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out.push_back(s[i]);
      continue;
    }
    if (++i == s.size()) throw Error(ErrorKind::CorruptState, "dangling escape in feature db");
    switch (s[i]) {
      case '\\': out.push_back('\\'); break;
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      default: throw Error(ErrorKind::CorruptState, "bad escape in feature db");
    }
  }
  return out;
}

}  // namespace

std::string FeatureDB::serialize() const {
  std::string out;
  for (const auto& entry : entries_) {
    out += escape_field(entry.format);
    out += '\t';
    out += to_string(entry.origin);
    out += '\t';
    out += escape_field(entry.name);
    out += '\t';
    out += escape_field(entry.description);
    out += '\n';
  }
  return out;
}

FeatureDB FeatureDB::parse(std::string_view text) {
  FeatureDB db;
  for (const auto& line : split_lines(text)) {
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      fields.emplace_back(std::string_view(line).substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) throw Error(ErrorKind::CorruptState, "feature db line has wrong arity");
    Feature feature;
    feature.format = unescape_field(fields[0]);
    if (fields[1] == "initial") {
      feature.origin = FeatureOrigin::Initial;
    } else if (fields[1] == "rare") {
      feature.origin = FeatureOrigin::Rare;
    } else {
      throw Error(ErrorKind::CorruptState, "unknown feature origin");
    }
    feature.name = unescape_field(fields[2]);
    feature.description = unescape_field(fields[3]);
    if (!db.add(std::move(feature))) throw Error(ErrorKind::CorruptState, "duplicate feature in db");
  }
  return db;
}

std::vector<Feature> FeatureCatalog::analyze_features(const std::string& format, std::size_t limit) {
  if (trim(format).empty()) throw Error(ErrorKind::ConfigError, "empty format name");
  llm::Dialogue dialogue(llm::PromptKind::FeatureAnalysis,
                         gateway_.render(llm::PromptKind::FeatureAnalysis, {{"format", format}}));
  auto reply = gateway_.complete(dialogue);
  auto items = parse_numbered_list(reply.text);
  if (items.empty()) throw Error(ErrorKind::UnparseableReply, "no numbered features for " + format);

  std::vector<Feature> result;
  for (auto& item : items) {
    if (limit != 0 && result.size() >= limit) break;
    Feature feature{item.name, item.description, format, FeatureOrigin::Initial};
    db_.add(feature);
    const Feature* stored = db_.find(format, item.name);
    bool seen = std::any_of(result.begin(), result.end(), [&](const Feature& f) {
      return normalize_feature_name(f.name) == normalize_feature_name(stored->name);
    });
    if (!seen) result.push_back(*stored);
  }
  return result;
}

std::vector<Feature> FeatureCatalog::discover_rare_features(const std::string& format) {
  llm::Dialogue dialogue(
      llm::PromptKind::RareFeatureExtraction,
      gateway_.render(llm::PromptKind::RareFeatureExtraction,
                      {{"format", format}, {"known_features", serialize_known(format)}}));
  auto reply = gateway_.complete(dialogue);

  std::vector<Feature> result;
  for (auto& item : parse_numbered_list(reply.text)) {
    Feature feature{item.name, item.description, format, FeatureOrigin::Rare};
    if (db_.add(feature)) result.push_back(std::move(feature));
  }
  return result;
}

std::string FeatureCatalog::serialize_known(std::string_view format) const {
  std::string out;
  std::size_t index = 0;
  for (const auto& feature : db_.features(format)) {
    if (index != 0) out += '\n';
    out += std::to_string(++index) + ". " + feature.label();
  }
  return out;
}

}  // namespace seedforge
