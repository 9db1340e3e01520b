// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "seedforge/llm/gateway.hpp"

namespace seedforge {

enum class FeatureOrigin { Initial, Rare };

std::string_view to_string(FeatureOrigin origin) noexcept;

/// A named, described attribute of a file format.
struct Feature {
  std::string name;
  std::string description;
  std::string format;
  FeatureOrigin origin = FeatureOrigin::Initial;

  /// "name: description", or just the name when there is no description.
  std::string label() const;
  bool operator==(const Feature&) const = default;
};

/// Feature names compare case-insensitively with runs of whitespace collapsed.
std::string normalize_feature_name(std::string_view name);

struct ListItem {
  std::string name;
  std::string description;
};

/// Parses "N. Name: description" / "N. Name - description" lines. Items without
/// a separator get an empty description; other lines are ignored.
std::vector<ListItem> parse_numbered_list(std::string_view text);

/// Append-only per-format feature store. (format, normalized name) is unique.
class FeatureDB {
 public:
  /// Returns false (and stores nothing) if the name is already present.
  bool add(Feature feature);
  bool contains(std::string_view format, std::string_view name) const;
  const Feature* find(std::string_view format, std::string_view name) const;

  /// Features of `format` in insertion order.
  std::vector<Feature> features(std::string_view format) const;
  std::vector<std::string> formats() const;
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t size(std::string_view format) const;

  /// Line-oriented text: one tab-separated `format origin name description`
  /// record per line, with \t \n \\ escaped.
  std::string serialize() const;
  static FeatureDB parse(std::string_view text);

  bool operator==(const FeatureDB&) const = default;

 private:
  std::vector<Feature> entries_;
};

/// Feature analysis and rare-feature discovery through the LLM.
class FeatureCatalog {
 public:
  FeatureCatalog(llm::Gateway& gateway, FeatureDB& db) : gateway_(gateway), db_(db) {}

  /// Asks for the format's features and records them with origin=initial.
  /// Returns the distinct features named by the reply (at most `limit` when
  /// nonzero). Throws UnparseableReply when the reply has no numbered items.
  std::vector<Feature> analyze_features(const std::string& format, std::size_t limit = 0);

  /// Asks for features beyond the ones already known and records the new ones
  /// with origin=rare. A reply without list items yields an empty result.
  std::vector<Feature> discover_rare_features(const std::string& format);

  /// "i. name: description" per known feature, catalog order.
  std::string serialize_known(std::string_view format) const;

 private:
  llm::Gateway& gateway_;
  FeatureDB& db_;
};

}  // namespace seedforge
