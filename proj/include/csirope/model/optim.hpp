#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "csirope/model/model.hpp"

namespace csirope::model {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// AdamW with decoupled weight decay. Decay applies only to parameters
/// flagged `decay` (matrix weights); biases, norms, banks and the mask token
/// are exempt.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ParameterStore& params, AdamWConfig config);

  /// grads[i] has the size of params[i]; an empty entry counts as zero.
  void step(ParameterStore& params, std::span<const std::vector<double>> grads, double lr);

  const AdamWConfig& config() const { return config_; }
  std::size_t steps() const { return steps_; }
  std::vector<std::vector<double>>& first_moment() { return m_; }
  std::vector<std::vector<double>>& second_moment() { return v_; }
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }
  void set_steps(std::size_t s) { steps_ = s; }

 private:
  AdamWConfig config_;
  std::size_t steps_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

enum class LrSchedule { kConstant, kCosine };

/// Learning rate for a 1-based epoch: linear warmup lr*e/warmup, then
/// constant (or cosine decay to zero at `epochs`).
double learning_rate(std::size_t epoch, double base_lr, std::size_t warmup, std::size_t epochs,
                     LrSchedule schedule);

}  // namespace csirope::model
