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

#include "mbra2d/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mbra2d {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_string(const std::string& text,
                                            const std::string& origin) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected `key = value`, got `" + stripped + "`");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str(), path);
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

void KeyValueConfig::set_double(const std::string& key, double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  values_[key] = buf;
}

void KeyValueConfig::set_int(const std::string& key, long long value) {
  values_[key] = std::to_string(value);
}

void KeyValueConfig::set_u64(const std::string& key, std::uint64_t value) {
  values_[key] = std::to_string(value);
}

void KeyValueConfig::set_bool(const std::string& key, bool value) {
  values_[key] = value ? "true" : "false";
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0') {
    throw ConfigError("field `" + key + "`: not a number: `" + it->second + "`");
  }
  return v;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const long long v = std::strtoll(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0') {
    throw ConfigError("field `" + key + "`: not an integer: `" + it->second + "`");
  }
  return v;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key,
                                      std::uint64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0') {
    throw ConfigError("field `" + key + "`: not an integer: `" + it->second + "`");
  }
  return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("field `" + key + "`: not a boolean: `" + it->second + "`");
}

void KeyValueConfig::apply_env_overrides(const std::string& prefix) {
  for (auto& [key, value] : values_) {
    std::string env_name = prefix;
    for (char c : key) {
      env_name += (c == '.' ? '_'
                            : static_cast<char>(std::toupper(
                                  static_cast<unsigned char>(c))));
    }
    if (const char* env = std::getenv(env_name.c_str())) value = env;
  }
}

std::string KeyValueConfig::serialize() const {
  std::string out;
  for (const auto& [key, value] : values_) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  }
  return out;
}

void KeyValueConfig::write_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file: " + path);
  out << serialize();
}

}  // namespace mbra2d
