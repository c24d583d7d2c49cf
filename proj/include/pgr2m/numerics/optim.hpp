#pragma once

#include <cstdint>
#include <vector>

#include "pgr2m/numerics/tape.hpp"

namespace pgr2m::nn {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  std::int64_t warmup_steps = 1000;
};

// Linear warm-up from 0 to the base rate over the first `warmup_steps` steps.
double warmup_lr(double base_lr, std::int64_t step, std::int64_t warmup_steps);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);

  // One bias-corrected update from the accumulated grads; returns the lr used.
  double step();
  void zero_grad();

  const AdamState& state() const noexcept { return state_; }
  // Shapes must match the parameter list.
  void load_state(AdamState state);
  const std::vector<Parameter*>& params() const noexcept { return params_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  AdamState state_;
};

// Global L2 norm over all grads, accumulated in double.
double grad_norm(const std::vector<Parameter*>& params);
// Scales grads so their global norm does not exceed max_norm.
void clip_grad_norm(const std::vector<Parameter*>& params, double max_norm);

}  // namespace pgr2m::nn
