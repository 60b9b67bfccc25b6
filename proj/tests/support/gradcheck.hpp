#pragma once

// Central finite-difference oracle for reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "csirope/autodiff/tensor.hpp"
#include "csirope/util/rng.hpp"

namespace csirope::test {

using LeafFn = std::function<ad::Tensor(const std::vector<ad::Tensor>&)>;

struct GradReport {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero entries, where
// the difference quotient is dominated by rounding, from inflating the ratio.
inline double rel_error(double a, double n, double floor = 1e-3) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Compares backward() against (f(x+h) - f(x-h)) / 2h for every element of
/// every input. `fn` must return a scalar.
inline GradReport check_gradients(const LeafFn& fn, const std::vector<ad::Shape>& shapes,
                                  std::vector<std::vector<double>> values, double h = 1e-5) {
  std::vector<ad::Tensor> leaves;
  for (std::size_t i = 0; i < shapes.size(); ++i) leaves.push_back(ad::Tensor::parameter(shapes[i], values[i]));
  fn(leaves).backward();
  GradReport report;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto g = leaves[i].grad();
    for (std::size_t j = 0; j < values[i].size(); ++j) {
      auto eval = [&](double delta) {
        auto v = values;
        v[i][j] += delta;
        std::vector<ad::Tensor> c;
        for (std::size_t q = 0; q < shapes.size(); ++q) c.push_back(ad::Tensor::constant(shapes[q], v[q]));
        return fn(c).item();
      };
      const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
      const double analytic = g.empty() ? 0.0 : g[j];
      report.max_rel = std::max(report.max_rel, rel_error(analytic, numeric));
      ++report.checked;
    }
  }
  return report;
}

inline std::vector<double> random_values(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace csirope::test
