#pragma once

// Positional encodings for CSI patch tokens: two additive sinusoidal tables
// (flattened 1D and axis-split 3D) and three rotary variants that share one
// phase construction,
//
//   theta[m, h, i] = t_m * W_T[h,i] + k_m * W_K[h,i] + u_m * W_U[h,i],
//
// where W is a fixed bank, a learned bank, or a learned bank modulated per
// sample by the channel-conditioned controller:
//
//   W~ = W_base * (1 + delta_s) + delta_b,   (delta_s, delta_b) = g(c).

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csirope/autodiff/tensor.hpp"
#include "csirope/tokenizer/tokenizer.hpp"

namespace csirope::posenc {

enum class PeVariant { kApe1d, kApe3d, kRopeFixed, kRopeLearnable, kRopeAdaptive };

std::string_view variant_name(PeVariant v);
PeVariant parse_variant(std::string_view s);
bool is_rotary(PeVariant v);
inline constexpr PeVariant kAllVariants[] = {PeVariant::kApe1d, PeVariant::kApe3d,
                                             PeVariant::kRopeFixed, PeVariant::kRopeLearnable,
                                             PeVariant::kRopeAdaptive};

enum class Stage { kEncoder, kDecoder };

/// How init_bank spreads the RoPE magnitude over the three axes.
///   kRandomDirection: a uniform random unit 3-vector per (head, pair).
///   kPairPhase: each axis gets magnitude * cos(psi) for an independent
///     uniform angle psi per (axis, head, pair).
enum class BankInit { kRandomDirection, kPairPhase };

std::string_view bank_init_name(BankInit b);
BankInit parse_bank_init(std::string_view s);

inline constexpr std::size_t kAxes = 3;

/// Rotary frequencies laid out [axis (T,K,U)][head][pair].
struct FrequencyBank {
  std::size_t heads = 0;
  std::size_t head_dim = 0;
  Stage stage = Stage::kEncoder;
  bool learnable = false;
  std::vector<double> omega;

  std::size_t pairs() const { return head_dim / 2; }
  // Columns of the [3, heads*pairs] tensor view.
  std::size_t columns() const { return heads * pairs(); }
  std::size_t index(std::size_t axis, std::size_t head, std::size_t pair) const {
    return (axis * heads + head) * pairs() + pair;
  }
  double at(std::size_t axis, std::size_t head, std::size_t pair) const {
    return omega[index(axis, head, pair)];
  }
  ad::Tensor as_tensor(bool requires_grad = false) const;
};

/// RoPE magnitude omega^(-2(i-1)/d) for the 1-based pair index i.
double rope_magnitude(std::size_t pair_1based, std::size_t head_dim, double rope_base);

/// Learnable bank seeded with the RoPE magnitude profile, mixed across axes.
FrequencyBank init_bank(std::size_t head_dim, std::size_t heads, double rope_base,
                        std::uint64_t seed, Stage stage,
                        BankInit mode = BankInit::kRandomDirection);

/// Non-learnable bank: pair i (0-based) lives on axis i mod 3 with the RoPE
/// magnitude; the other two axes are zero.
FrequencyBank fixed_bank(std::size_t head_dim, std::size_t heads, double rope_base, Stage stage);

/// Controller weights: two affine branches 2D -> 3*heads*pairs. Zero at
/// construction, so the controller starts as the identity modulation.
struct ControllerParams {
  std::size_t token_dim = 0;
  std::size_t heads = 0;
  std::size_t head_dim = 0;
  std::vector<double> w_scale, b_scale;  // [2D, 3HP], [3HP]
  std::vector<double> w_shift, b_shift;

  std::size_t context_dim() const { return 2 * token_dim; }
  std::size_t output_dim() const { return kAxes * heads * (head_dim / 2); }
};

ControllerParams zero_controller(std::size_t token_dim, std::size_t heads, std::size_t head_dim);

// --- differentiable building blocks -------------------------------------

/// [mean over tokens ; population std over tokens] of an [L, D] tensor, as
/// [1, 2D]. Requires L >= 2.
ad::Tensor context_vector(const ad::Tensor& tokens);

struct ControllerOutputs {
  ad::Tensor delta_scale;  // [3, HP]
  ad::Tensor delta_shift;  // [3, HP]
};

ControllerOutputs controller_forward(const ad::Tensor& context, const ad::Tensor& w_scale,
                                     const ad::Tensor& b_scale, const ad::Tensor& w_shift,
                                     const ad::Tensor& b_shift, std::size_t columns);

/// base * (1 + delta_scale) + delta_shift, elementwise over [3, HP].
ad::Tensor modulate(const ad::Tensor& base, const ad::Tensor& delta_scale,
                    const ad::Tensor& delta_shift);

/// [L, 3] coordinate matrix (t, k, u) as doubles, optionally shifted.
ad::Tensor coordinate_matrix(std::span<const tokenizer::Coord> coords,
                             const tokenizer::Coord& shift = {});

/// theta = coords [L,3] x omega [3, HP] -> [L, HP].
ad::Tensor phases(const ad::Tensor& omega, const ad::Tensor& coords);

/// Rotates consecutive feature pairs (2j, 2j+1) of x [L, 2P] by theta [L, P]:
/// (a, b) -> (a cos - b sin, a sin + b cos). Differentiable in x and theta.
ad::Tensor apply_rotary(const ad::Tensor& x, const ad::Tensor& theta);

// --- plain-data conveniences ------------------------------------------------

/// Adapted frequencies for one context vector; same layout as the bank.
std::vector<double> modulate(const FrequencyBank& bank, const ControllerParams& ctrl,
                             std::span<const double> context);

// --- absolute encodings -----------------------------------------------------

enum class ApeKind { kApe1d, kApe3d };

/// Sinusoidal additive table, one row of width `dim` per coordinate.
/// kApe1d: classic table over the flattened index (t*Gk + k)*Gu + u.
/// kApe3d: three sub-bands of 2*floor(dim/6) columns each for t, k and u;
///   any leftover columns stay zero.
std::vector<double> ape_embeddings(ApeKind kind, std::span<const tokenizer::Coord> coords,
                                   const tokenizer::GridExtents& grid, std::size_t dim);

// --- diagnostics ------------------------------------------------------------

struct ProbeGrid {
  std::int64_t dt_min = -10, dt_max = 10, dt_step = 1;
  std::int64_t dk_min = -10, dk_max = 10, dk_step = 1;
  std::int64_t du_min = 0, du_max = 0, du_step = 1;
};

/// Content-free interference map of one head,
///   G(dt,dk,du) = (2/d) sum_i cos(dt W_T,i + dk W_K,i + du W_U,i).
struct ProbeMap {
  std::size_t head = 0;
  std::vector<tokenizer::Coord> offsets;
  std::vector<double> g;
};

/// `omega` is any [3][heads][pairs] frequency set (base or adapted).
ProbeMap phase_probe(std::span<const double> omega, std::size_t heads, std::size_t head_dim,
                     std::size_t head, const ProbeGrid& grid);
double probe_value(std::span<const double> omega, std::size_t heads, std::size_t head_dim,
                   std::size_t head, const tokenizer::Coord& offset);

std::string probe_csv(const ProbeMap& map);
std::string bank_csv(std::span<const double> omega, std::size_t heads, std::size_t head_dim);

/// Rotated query/key scores of every head evaluated at `coords` and at
/// `coords + shift`; returns the largest absolute difference. q, k: [n, H*d].
double rotary_relative_deviation(const ad::Tensor& q, const ad::Tensor& k,
                                 std::span<const tokenizer::Coord> coords,
                                 const ad::Tensor& omega, std::size_t heads,
                                 const tokenizer::Coord& shift);

/// Same harness for additive encodings: scores of W_q(x + p) against
/// W_k(x + p) with p from `kind` at coords and at coords + shift.
/// x: [n, D]; w_q, w_k: [D, D]. `grid` fixes the flattening of kApe1d.
double ape_relative_deviation(const ad::Tensor& x, const ad::Tensor& w_q, const ad::Tensor& w_k,
                              std::span<const tokenizer::Coord> coords, ApeKind kind,
                              const tokenizer::GridExtents& grid, std::size_t heads,
                              const tokenizer::Coord& shift);

}  // namespace csirope::posenc
