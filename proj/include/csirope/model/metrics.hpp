#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "csirope/autodiff/tensor.hpp"
#include "csirope/channel/channel.hpp"
#include "csirope/tokenizer/tokenizer.hpp"

namespace csirope::model {

/// Per-element weights over the [L, token_dim] token layout: 1 on the real
/// and imaginary parts of non-padded elements of masked tokens (or of every
/// token when `full` is set), 0 elsewhere.
std::vector<double> loss_weights(const tokenizer::TokenGrid& grid,
                                 const tokenizer::MaskSpec& mask, bool full = false);

/// Mean squared error over the weighted elements. Throws ContractError when
/// no element is selected.
ad::Tensor masked_mse(const ad::Tensor& pred, const tokenizer::TokenGrid& target,
                      const tokenizer::MaskSpec& mask, bool full = false);

/// Plain-array form on CsiArrays, for checking and reporting.
double masked_mse(const channel::CsiArray& pred, const channel::CsiArray& target,
                  const tokenizer::TokenGrid& layout, const tokenizer::MaskSpec& mask);

/// Element mask over a T*K*U array (offset order) covering the masked tokens.
std::vector<std::uint8_t> task_region(const tokenizer::TokenGrid& layout,
                                      const tokenizer::MaskSpec& mask);

inline constexpr double kNmseDbZero = -std::numeric_limits<double>::infinity();

struct Nmse {
  double linear = 0.0;
  double db = 0.0;  // kNmseDbZero for an exact match
};

double to_db(double linear);

/// ||H - H^||_F^2 / ||H||_F^2 restricted to `region` (all elements when
/// empty). Throws ContractError on a zero-power region.
Nmse nmse(const channel::CsiArray& pred, const channel::CsiArray& target,
          std::span<const std::uint8_t> region = {});

}  // namespace csirope::model
