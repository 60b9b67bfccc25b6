#pragma once

// Plain-text key=value records and the sectioned config file format:
//
//   # comment
//   version = 1
//   [section]
//   key = value
//
// Keys before the first section header belong to section "".

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>

namespace csirope::util {

using KeyValues = std::map<std::string, std::string>;
using Sections = std::map<std::string, KeyValues>;

// Shortest text that parses back to exactly `v`.
std::string format_double(double v);
std::string trim(const std::string& s);

KeyValues parse_kv_lines(const std::string& text);
Sections parse_sections(const std::string& text);
std::string format_sections(const Sections& sections);

// Required getters throw ConfigError(key) when absent or malformed.
std::string get_string(const KeyValues& kv, const std::string& key);
std::size_t get_size(const KeyValues& kv, const std::string& key);
double get_double(const KeyValues& kv, const std::string& key);
std::uint64_t get_u64(const KeyValues& kv, const std::string& key);

std::string get_string(const KeyValues& kv, const std::string& key, const std::string& fallback);
std::size_t get_size(const KeyValues& kv, const std::string& key, std::size_t fallback);
double get_double(const KeyValues& kv, const std::string& key, double fallback);
std::uint64_t get_u64(const KeyValues& kv, const std::string& key, std::uint64_t fallback);
bool get_bool(const KeyValues& kv, const std::string& key, bool fallback);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace csirope::util
