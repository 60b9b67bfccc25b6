#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "csirope/channel/channel.hpp"

namespace csirope::tokenizer {

struct PatchSpec {
  std::size_t p_t = 4, p_k = 4, p_u = 4;

  void validate() const;
  std::size_t elements() const { return p_t * p_k * p_u; }
  // Real and imaginary parts interleaved per element.
  std::size_t token_dim() const { return 2 * elements(); }
};

/// Integer patch index of a token along (t, k, u).
struct Coord {
  std::int64_t t = 0, k = 0, u = 0;
  bool operator==(const Coord&) const = default;
};

struct GridExtents {
  std::size_t t = 0, k = 0, u = 0;
  std::size_t count() const { return t * k * u; }
  bool operator==(const GridExtents&) const = default;
};

/// Patch tokens of one CSI array.
///
/// Token order is t-major, then k, then u. Inside a token, elements run over
/// (dt, dk, du) t-major and each contributes (re, im). Elements that fall
/// outside the source array are zero padding and are flagged invalid.
struct TokenGrid {
  PatchSpec patch;
  std::size_t T = 0, K = 0, U = 0;  // source extents
  GridExtents grid;
  std::vector<double> tokens;  // L x token_dim, row-major
  std::vector<Coord> coords;   // L
  std::vector<std::uint8_t> valid;  // L x token_dim, 1 for real data

  std::size_t length() const { return coords.size(); }
  std::size_t token_dim() const { return patch.token_dim(); }
  std::size_t token_index(std::size_t t, std::size_t k, std::size_t u) const {
    return (t * grid.k + k) * grid.u + u;
  }
};

GridExtents grid_extents(std::size_t T, std::size_t K, std::size_t U, const PatchSpec& patch);

TokenGrid tokenize(const channel::CsiArray& h, const PatchSpec& patch);

/// Scatters an L x token_dim matrix back into a T x K x U array, dropping
/// padding. `layout` supplies the geometry.
channel::CsiArray detokenize(const std::vector<double>& tokens, const TokenGrid& layout);

enum class MaskKind { kRandom, kTemporal, kFrequency };

std::string_view mask_kind_name(MaskKind kind);
MaskKind parse_mask_kind(std::string_view s);

struct MaskSpec {
  MaskKind kind = MaskKind::kRandom;
  double ratio = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> masked_ids;   // ascending
  std::vector<std::size_t> visible_ids;  // ascending

  // Single-line text form for run manifests.
  std::string describe() const;
};

/// random: floor(ratio*L) tokens drawn without replacement from `seed`.
/// temporal / frequency: the last ceil(ratio*extent) patch rows along t / k.
/// Throws ContractError when nothing would be masked or nothing visible.
MaskSpec build_mask(const TokenGrid& grid, MaskKind kind, double ratio, std::uint64_t seed);

/// Number of tail rows masked along an axis of `extent` patch rows.
std::size_t tail_rows(std::size_t extent, double ratio);

}  // namespace csirope::tokenizer
