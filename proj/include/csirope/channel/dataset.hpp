#pragma once

// CSI3D1 dataset files (little-endian):
//
//   "CSI3D1\n"
//   u32 version (=1), u32 T, u32 K, u32 U, u32 N, u64 seed
//   u32 record length, record bytes (UTF-8 key=value lines)
//   N*T*K*U complex entries as float32 (re, im); sample-major, then t, k, u
//   u32 CRC32 of the payload
//
// The record carries the canonical ChannelConfig text followed by the split
// counts (split_train, split_val, split_test).

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csirope/channel/channel.hpp"

namespace csirope::channel {

inline constexpr std::string_view kDatasetMagic = "CSI3D1\n";
inline constexpr std::uint32_t kDatasetVersion = 1;

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
  std::size_t total() const { return train + val + test; }
  bool operator==(const SplitCounts&) const = default;
};

/// Largest-remainder apportionment of n samples; ratios must be
/// non-negative and sum to 1 within 1e-6. A ratio within 5e-4 of a fraction
/// p/q with q <= 24 is read as that fraction when all three snapped values
/// still sum to exactly 1.
SplitCounts split_counts(std::size_t n, std::span<const double> ratios);

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Deterministic shuffled assignment of sample indices to the three splits.
SplitIndices split_indices(const SplitCounts& counts, std::uint64_t seed);

struct Dataset {
  ChannelConfig config;
  SplitCounts split;
  std::vector<CsiArray> samples;

  SplitIndices indices() const { return split_indices(split, config.seed); }
  std::vector<CsiArray> subset(const std::vector<std::size_t>& ids) const;
};

std::string dataset_record(const Dataset& ds);

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
/// Throws FormatError on bad magic, version, truncation or CRC mismatch.
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

void write_dataset(const std::string& path, const Dataset& ds, bool force = false);
Dataset read_dataset(const std::string& path);

/// Generates and writes one dataset per config into out_dir, named
/// "<index>_<scenario_tag>.csi3d". Returns the written paths.
std::vector<std::string> make_dataset_suite(const std::vector<ChannelConfig>& configs,
                                            std::size_t n_samples,
                                            std::span<const double> ratios,
                                            const std::string& out_dir, bool force = false);

}  // namespace csirope::channel
