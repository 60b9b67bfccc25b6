#include "csirope/tokenizer/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "csirope/errors.hpp"
#include "csirope/util/kv.hpp"
#include "csirope/util/rng.hpp"

namespace csirope::tokenizer {

void PatchSpec::validate() const {
  if (p_t < 1) throw ConfigError("p_t", "must be >= 1");
  if (p_k < 1) throw ConfigError("p_k", "must be >= 1");
  if (p_u < 1) throw ConfigError("p_u", "must be >= 1");
}

GridExtents grid_extents(std::size_t T, std::size_t K, std::size_t U, const PatchSpec& patch) {
  auto ceil_div = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
  return {ceil_div(T, patch.p_t), ceil_div(K, patch.p_k), ceil_div(U, patch.p_u)};
}

TokenGrid tokenize(const channel::CsiArray& h, const PatchSpec& patch) {
  patch.validate();
  TokenGrid g;
  g.patch = patch;
  g.T = h.T;
  g.K = h.K;
  g.U = h.U;
  g.grid = grid_extents(h.T, h.K, h.U, patch);
  const std::size_t L = g.grid.count();
  const std::size_t D = patch.token_dim();
  g.tokens.assign(L * D, 0.0);
  g.valid.assign(L * D, 0);
  g.coords.resize(L);
  for (std::size_t gt = 0; gt < g.grid.t; ++gt)
    for (std::size_t gk = 0; gk < g.grid.k; ++gk)
      for (std::size_t gu = 0; gu < g.grid.u; ++gu) {
        const std::size_t m = g.token_index(gt, gk, gu);
        g.coords[m] = {static_cast<std::int64_t>(gt), static_cast<std::int64_t>(gk),
                       static_cast<std::int64_t>(gu)};
        double* row = g.tokens.data() + m * D;
        std::uint8_t* ok = g.valid.data() + m * D;
        std::size_t e = 0;
        for (std::size_t dt = 0; dt < patch.p_t; ++dt)
          for (std::size_t dk = 0; dk < patch.p_k; ++dk)
            for (std::size_t du = 0; du < patch.p_u; ++du, e += 2) {
              const std::size_t t = gt * patch.p_t + dt, k = gk * patch.p_k + dk,
                                u = gu * patch.p_u + du;
              if (t >= h.T || k >= h.K || u >= h.U) continue;
              const auto v = h.at(t, k, u);
              row[e] = v.real();
              row[e + 1] = v.imag();
              ok[e] = ok[e + 1] = 1;
            }
      }
  return g;
}

channel::CsiArray detokenize(const std::vector<double>& tokens, const TokenGrid& layout) {
  const std::size_t D = layout.token_dim();
  if (tokens.size() != layout.length() * D) {
    throw ShapeError("detokenize: expected " + std::to_string(layout.length()) + "x" +
                     std::to_string(D) + " values, got " + std::to_string(tokens.size()));
  }
  const auto& p = layout.patch;
  channel::CsiArray out(layout.T, layout.K, layout.U);
  for (std::size_t m = 0; m < layout.length(); ++m) {
    const auto& c = layout.coords[m];
    const double* row = tokens.data() + m * D;
    std::size_t e = 0;
    for (std::size_t dt = 0; dt < p.p_t; ++dt)
      for (std::size_t dk = 0; dk < p.p_k; ++dk)
        for (std::size_t du = 0; du < p.p_u; ++du, e += 2) {
          const std::size_t t = static_cast<std::size_t>(c.t) * p.p_t + dt,
                            k = static_cast<std::size_t>(c.k) * p.p_k + dk,
                            u = static_cast<std::size_t>(c.u) * p.p_u + du;
          if (t >= layout.T || k >= layout.K || u >= layout.U) continue;
          out.at(t, k, u) = {row[e], row[e + 1]};
        }
  }
  return out;
}

std::string_view mask_kind_name(MaskKind kind) {
  switch (kind) {
    case MaskKind::kRandom: return "random";
    case MaskKind::kTemporal: return "temporal";
    case MaskKind::kFrequency: return "frequency";
  }
  return "?";
}

MaskKind parse_mask_kind(std::string_view s) {
  if (s == "random" || s == "reconstruction") return MaskKind::kRandom;
  if (s == "temporal" || s == "time") return MaskKind::kTemporal;
  if (s == "frequency" || s == "freq") return MaskKind::kFrequency;
  throw ConfigError("task", "expected random, temporal or frequency, got '" + std::string(s) + "'");
}

std::string MaskSpec::describe() const {
  std::ostringstream os;
  os << "kind=" << mask_kind_name(kind) << " ratio=" << util::format_double(ratio)
     << " seed=" << seed << " masked=" << masked_ids.size() << " visible=" << visible_ids.size();
  return os.str();
}

std::size_t tail_rows(std::size_t extent, double ratio) {
  // The small slack keeps products such as 0.3*10 from rounding up a row.
  return static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(extent) - 1e-9));
}

MaskSpec build_mask(const TokenGrid& grid, MaskKind kind, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ContractError("build_mask: ratio must lie in (0,1)");
  const std::size_t L = grid.length();
  MaskSpec m;
  m.kind = kind;
  m.ratio = ratio;
  m.seed = seed;
  std::vector<std::uint8_t> masked(L, 0);
  if (kind == MaskKind::kRandom) {
    const auto n = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(L)));
    if (n == 0 || n >= L) {
      throw ContractError("build_mask: random ratio " + util::format_double(ratio) + " on " +
                          std::to_string(L) + " tokens leaves an empty partition");
    }
    std::vector<std::size_t> perm(L);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) std::swap(perm[i], perm[i + rng.index(L - i)]);
    for (std::size_t i = 0; i < n; ++i) masked[perm[i]] = 1;
  } else {
    const bool temporal = kind == MaskKind::kTemporal;
    const std::size_t extent = temporal ? grid.grid.t : grid.grid.k;
    const std::size_t rows = tail_rows(extent, ratio);
    if (rows == 0 || rows >= extent) {
      throw ContractError(std::string("build_mask: ") + std::string(mask_kind_name(kind)) +
                          " ratio " + util::format_double(ratio) + " over " +
                          std::to_string(extent) + " patch rows leaves an empty partition");
    }
    const auto first = static_cast<std::int64_t>(extent - rows);
    for (std::size_t i = 0; i < L; ++i) {
      const auto pos = temporal ? grid.coords[i].t : grid.coords[i].k;
      masked[i] = pos >= first;
    }
  }
  for (std::size_t i = 0; i < L; ++i) (masked[i] ? m.masked_ids : m.visible_ids).push_back(i);
  return m;
}

}  // namespace csirope::tokenizer
