#include "csirope/model/optim.hpp"

#include <cmath>
#include <numbers>

#include "csirope/errors.hpp"

namespace csirope::model {

AdamW::AdamW(const ParameterStore& params, AdamWConfig config) : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void AdamW::step(ParameterStore& params, std::span<const std::vector<double>> grads, double lr) {
  if (grads.size() != params.size() || m_.size() != params.size()) {
    throw ContractError("AdamW::step: parameter count mismatch");
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].value;
    const auto& g = grads[i];
    if (!g.empty() && g.size() != w.size()) throw ContractError("AdamW::step: gradient size mismatch");
    const double decay = params[i].decay ? lr * config_.weight_decay : 0.0;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      w[j] -= decay * w[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
    }
  }
}

double learning_rate(std::size_t epoch, double base_lr, std::size_t warmup, std::size_t epochs,
                     LrSchedule schedule) {
  if (epoch == 0) throw ContractError("learning_rate: epochs are 1-based");
  if (epoch <= warmup) return base_lr * static_cast<double>(epoch) / static_cast<double>(warmup);
  if (schedule == LrSchedule::kConstant || epochs <= warmup) return base_lr;
  const double progress =
      static_cast<double>(epoch - warmup) / static_cast<double>(epochs - warmup);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

}  // namespace csirope::model
