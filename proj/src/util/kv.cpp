#include "csirope/util/kv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "csirope/errors.hpp"

namespace csirope::util {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

namespace {

void parse_into(const std::string& text, Sections& out, bool allow_sections) {
  std::istringstream is(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (!allow_sections || t.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno), "unexpected section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      out[section];
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno), "expected key = value");
    }
    out[section][trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
}

template <class T>
T parse_number(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError(key, "required field is missing");
  const auto& s = it->second;
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(key, "cannot parse '" + s + "'");
  }
  return v;
}

}  // namespace

KeyValues parse_kv_lines(const std::string& text) {
  Sections s;
  parse_into(text, s, false);
  return s[""];
}

Sections parse_sections(const std::string& text) {
  Sections s;
  parse_into(text, s, true);
  return s;
}

std::string format_sections(const Sections& sections) {
  std::ostringstream os;
  if (auto it = sections.find(""); it != sections.end()) {
    for (const auto& [k, v] : it->second) os << k << " = " << v << '\n';
  }
  for (const auto& [name, kv] : sections) {
    if (name.empty()) continue;
    os << '[' << name << "]\n";
    for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
  }
  return os.str();
}

std::string get_string(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError(key, "required field is missing");
  return it->second;
}

std::size_t get_size(const KeyValues& kv, const std::string& key) {
  return parse_number<std::size_t>(kv, key);
}

double get_double(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError(key, "required field is missing");
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "cannot parse '" + it->second + "'");
  }
}

std::uint64_t get_u64(const KeyValues& kv, const std::string& key) {
  return parse_number<std::uint64_t>(kv, key);
}

std::string get_string(const KeyValues& kv, const std::string& key, const std::string& fallback) {
  return kv.count(key) ? get_string(kv, key) : fallback;
}
std::size_t get_size(const KeyValues& kv, const std::string& key, std::size_t fallback) {
  return kv.count(key) ? get_size(kv, key) : fallback;
}
double get_double(const KeyValues& kv, const std::string& key, double fallback) {
  return kv.count(key) ? get_double(kv, key) : fallback;
}
std::uint64_t get_u64(const KeyValues& kv, const std::string& key, std::uint64_t fallback) {
  return kv.count(key) ? get_u64(kv, key) : fallback;
}

bool get_bool(const KeyValues& kv, const std::string& key, bool fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  const auto& v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError(key, "expected a boolean, got '" + v + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace csirope::util
