#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "csirope/autodiff/tensor.hpp"

namespace csirope::ad {

enum class ElemOp { kAdd, kSub, kMul, kNeg, kSin, kCos, kExp, kSqr };

// Broadcast rule for binary ops. With a.shape = [a0 .. an-1], b is accepted
// when one of the following holds:
//   * b.shape == a.shape;
//   * column broadcast: b has the same rank and b = [a0 .. ak-1, 1 .. 1]
//     for some k (trailing singleton axes, e.g. [L,1] against [L,D]);
//   * row broadcast: b.shape equals a trailing suffix of a.shape
//     (e.g. a bias [D] against [L,D]).
// The result always has a's shape; b's adjoint sums over the repeated
// elements. Anything else raises ShapeError naming both shapes.
Tensor elementwise(ElemOp op, const Tensor& a, const Tensor& b = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sqr(const Tensor& a);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
// tanh approximation of GELU.
Tensor gelu(const Tensor& a);

// 2D product [m,k]·[k,n].
Tensor matmul(const Tensor& a, const Tensor& b);
// a·bᵀ for [m,k], [n,k] without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// Columns [start, start+len) of a 2D tensor.
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
// Row i of the result is row index[i] of a; indices may repeat.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);

enum class ReduceOp { kSum, kMean, kStd };

// Reduces over `axis` (dropping it) or over all elements when omitted.
// kStd is the population standard deviation (divisor n) and requires at
// least two elements per reduction.
Tensor reduce(ReduceOp op, const Tensor& a, std::optional<std::size_t> axis = std::nullopt);
Tensor sum(const Tensor& a, std::optional<std::size_t> axis = std::nullopt);
Tensor mean(const Tensor& a, std::optional<std::size_t> axis = std::nullopt);
Tensor std_dev(const Tensor& a, std::optional<std::size_t> axis = std::nullopt);

Tensor softmax_lastaxis(const Tensor& a);

inline constexpr double kLayerNormEps = 1e-5;
// Normalizes each row over the last axis, then applies gain and bias.
Tensor layernorm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                 double eps = kLayerNormEps);

// Worker threads inside the BLAS kernels behind matmul. Keep at 1 when
// results must be bit-reproducible.
void set_kernel_threads(std::size_t n);

}  // namespace csirope::ad
