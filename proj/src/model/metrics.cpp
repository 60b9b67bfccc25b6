#include "csirope/model/metrics.hpp"

#include <cmath>
#include <complex>

#include "csirope/autodiff/ops.hpp"
#include "csirope/errors.hpp"

namespace csirope::model {

std::vector<double> loss_weights(const tokenizer::TokenGrid& grid,
                                 const tokenizer::MaskSpec& mask, bool full) {
  const std::size_t D = grid.token_dim();
  std::vector<double> w(grid.length() * D, 0.0);
  auto mark = [&](std::size_t m) {
    for (std::size_t e = 0; e < D; ++e) w[m * D + e] = grid.valid[m * D + e] ? 1.0 : 0.0;
  };
  if (full) {
    for (std::size_t m = 0; m < grid.length(); ++m) mark(m);
  } else {
    for (auto m : mask.masked_ids) mark(m);
  }
  return w;
}

ad::Tensor masked_mse(const ad::Tensor& pred, const tokenizer::TokenGrid& target,
                      const tokenizer::MaskSpec& mask, bool full) {
  const ad::Shape shape{target.length(), target.token_dim()};
  if (pred.shape() != shape) {
    throw ShapeError("masked_mse: prediction " + ad::shape_str(pred.shape()) + " vs target " +
                     ad::shape_str(shape));
  }
  auto w = loss_weights(target, mask, full);
  double count = 0.0;
  for (double x : w) count += x;
  if (count == 0.0) throw ContractError("masked_mse: no masked elements");
  auto diff = ad::sub(pred, ad::Tensor::constant(shape, target.tokens));
  auto err = ad::mul(ad::sqr(diff), ad::Tensor::constant(shape, std::move(w)));
  return ad::scale(ad::sum(err), 1.0 / count);
}

std::vector<std::uint8_t> task_region(const tokenizer::TokenGrid& layout,
                                      const tokenizer::MaskSpec& mask) {
  std::vector<std::uint8_t> region(layout.T * layout.K * layout.U, 0);
  const auto& p = layout.patch;
  for (auto m : mask.masked_ids) {
    const auto& c = layout.coords[m];
    for (std::size_t dt = 0; dt < p.p_t; ++dt)
      for (std::size_t dk = 0; dk < p.p_k; ++dk)
        for (std::size_t du = 0; du < p.p_u; ++du) {
          const std::size_t t = static_cast<std::size_t>(c.t) * p.p_t + dt,
                            k = static_cast<std::size_t>(c.k) * p.p_k + dk,
                            u = static_cast<std::size_t>(c.u) * p.p_u + du;
          if (t < layout.T && k < layout.K && u < layout.U)
            region[(t * layout.K + k) * layout.U + u] = 1;
        }
  }
  return region;
}

namespace {

void check_same(const channel::CsiArray& a, const channel::CsiArray& b) {
  if (a.T != b.T || a.K != b.K || a.U != b.U) throw ShapeError("CSI arrays differ in shape");
}

}  // namespace

double masked_mse(const channel::CsiArray& pred, const channel::CsiArray& target,
                  const tokenizer::TokenGrid& layout, const tokenizer::MaskSpec& mask) {
  check_same(pred, target);
  const auto region = task_region(layout, mask);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (!region[i]) continue;
    const auto d = pred.h[i] - target.h[i];
    acc += d.real() * d.real() + d.imag() * d.imag();
    n += 2;
  }
  if (n == 0) throw ContractError("masked_mse: no masked elements");
  return acc / static_cast<double>(n);
}

double to_db(double linear) { return linear > 0.0 ? 10.0 * std::log10(linear) : kNmseDbZero; }

Nmse nmse(const channel::CsiArray& pred, const channel::CsiArray& target,
          std::span<const std::uint8_t> region) {
  check_same(pred, target);
  if (!region.empty() && region.size() != target.size()) {
    throw ShapeError("nmse: region does not match the array size");
  }
  double err = 0.0, power = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!region.empty() && !region[i]) continue;
    err += std::norm(pred.h[i] - target.h[i]);
    power += std::norm(target.h[i]);
  }
  if (power == 0.0) throw ContractError("nmse: target has zero power on the region");
  const double lin = err / power;
  return {lin, to_db(lin)};
}

}  // namespace csirope::model
