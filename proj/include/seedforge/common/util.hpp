// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace seedforge {

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

std::string to_hex(std::string_view bytes);
std::string from_hex(std::string_view hex);

std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view text);

/// Keeps the last `max_chars` characters of `text`.
std::string tail(std::string_view text, std::size_t max_chars);

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temp file and rename(2), so readers never observe a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Deterministic campaign RNG. Draws use rejection sampling so a seed yields the
/// same sequence on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform over [0, n). n must be > 0.
  std::size_t index(std::size_t n);
  /// Uniform over [0, 1).
  double unit();

  std::string save() const;
  void load(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

/// Fault-injection hook for crash-recovery testing. When the environment
/// variable SEEDFORGE_FAULT_KILL_AT=k is set, the k-th call in this process
/// raises SIGKILL on itself. Otherwise it only counts.
void fault_point(std::string_view tag);
std::uint64_t fault_points_passed();

}  // namespace seedforge
