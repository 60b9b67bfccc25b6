#pragma once

// Run manifests: the resolved config sections of a command plus a
// [manifest] section (tool version, command, timestamps, determinism),
// [seeds], and [inputs]/[outputs] maps of file path -> CRC32. Unknown
// sections are ignored by the config readers, so a manifest can be passed
// back as a config to repeat the run.

#include <string>
#include <vector>

#include "csirope/util/kv.hpp"

namespace csirope::util {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kConfigFormat = "1";

class RunManifest {
 public:
  RunManifest(std::string command, bool deterministic, std::size_t threads);

  void set_config(const Sections& config);
  void add_seed(const std::string& name, std::uint64_t seed);
  void add_input(const std::string& path);
  void add_output(const std::string& path);
  void set(const std::string& section, const std::string& key, const std::string& value);

  // Stamps the end time and renders the text.
  std::string finish();
  void write(const std::string& path);

  const Sections& sections() const { return sections_; }

 private:
  Sections sections_;
};

std::string utc_timestamp();
// CRC32 of a file's bytes as 8 lowercase hex digits.
std::string file_crc32(const std::string& path);

/// Paths matching a glob pattern, sorted; a pattern without wildcards is
/// returned as-is when the file exists.
std::vector<std::string> expand_glob(const std::string& pattern);

}  // namespace csirope::util
