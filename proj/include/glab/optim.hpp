#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "glab/autodiff.hpp"

namespace glab {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

// AdamW with decoupled weight decay and bias correction. Moment buffers are
// keyed by parameter name and created on first use.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  // Applies one update from the gradients currently stored in `params`.
  // Throws TrainingError naming the parameter if any gradient is non-finite;
  // in that case no parameter is modified.
  void step(ParameterSet& params, double lr);

  std::int64_t steps() const noexcept { return step_; }
  const AdamWConfig& config() const noexcept { return config_; }

  struct Moments {
    Tensor m;
    Tensor v;
  };
  const std::map<std::string, Moments>& moments() const noexcept { return moments_; }

 private:
  AdamWConfig config_;
  std::int64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

// Linear warmup from 0 to `peak` over `warmup_steps`, constant afterwards.
struct WarmupSchedule {
  std::int64_t warmup_steps = 5000;
  double peak = 1e-4;

  double lr_at(std::int64_t step) const;
};

}  // namespace glab
