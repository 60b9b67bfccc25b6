#include "csirope/util/manifest.hpp"

#include <glob.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>

#include "csirope/util/binary_io.hpp"

namespace csirope::util {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string file_crc32(const std::string& path) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", crc32(read_binary_file(path)));
  return buf;
}

RunManifest::RunManifest(std::string command, bool deterministic, std::size_t threads) {
  auto& m = sections_["manifest"];
  m["tool_version"] = kToolVersion;
  m["command"] = std::move(command);
  m["started"] = utc_timestamp();
  m["deterministic"] = deterministic ? "true" : "false";
  m["threads"] = std::to_string(threads);
  sections_[""]["format"] = kConfigFormat;
}

void RunManifest::set_config(const Sections& config) {
  for (const auto& [name, kv] : config) {
    if (name == "manifest" || name == "inputs" || name == "outputs" || name == "seeds") continue;
    for (const auto& [k, v] : kv) sections_[name][k] = v;
  }
}

void RunManifest::add_seed(const std::string& name, std::uint64_t seed) {
  sections_["seeds"][name] = std::to_string(seed);
}

void RunManifest::add_input(const std::string& path) { sections_["inputs"][path] = file_crc32(path); }

void RunManifest::add_output(const std::string& path) {
  sections_["outputs"][path] = file_crc32(path);
}

void RunManifest::set(const std::string& section, const std::string& key, const std::string& value) {
  sections_[section][key] = value;
}

std::string RunManifest::finish() {
  sections_["manifest"]["finished"] = utc_timestamp();
  return format_sections(sections_);
}

void RunManifest::write(const std::string& path) { write_text_file(path, finish()); }

std::vector<std::string> expand_glob(const std::string& pattern) {
  if (pattern.find_first_of("*?[") == std::string::npos) {
    if (std::filesystem::exists(pattern)) return {pattern};
    return {};
  }
  glob_t g{};
  std::vector<std::string> out;
  if (::glob(pattern.c_str(), 0, nullptr, &g) == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  return out;
}

}  // namespace csirope::util
