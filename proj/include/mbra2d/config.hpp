// Copyright 2026 The mbra2d Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace mbra2d {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Flat `key = value` configuration with dotted section names, e.g.
/// `noise.gps_sigma = 0.5`. Serialization is sorted by key so configs diff
/// cleanly. Parse and conversion errors name the offending field (and line,
/// when read from a file).
class KeyValueConfig {
 public:
  static KeyValueConfig parse_string(const std::string& text,
                                     const std::string& origin = "<string>");
  static KeyValueConfig parse_file(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double value);
  void set_int(const std::string& key, long long value);
  void set_u64(const std::string& key, std::uint64_t value);
  void set_bool(const std::string& key, bool value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Environment variables override file values: key `a.b_c` is looked up as
  /// `<prefix>A_B_C`.
  void apply_env_overrides(const std::string& prefix);

  std::string serialize() const;
  void write_file(const std::string& path) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace mbra2d
