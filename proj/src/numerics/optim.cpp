#include "pgr2m/numerics/optim.hpp"

#include <algorithm>
#include <cmath>

#include "pgr2m/error.hpp"

namespace pgr2m::nn {

double warmup_lr(double base_lr, std::int64_t step, std::int64_t warmup_steps) {
  if (warmup_steps <= 0 || step >= warmup_steps) return base_lr;
  return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (auto* p : params_) {
    state_.m.emplace_back(p->value.shape());
    state_.v.emplace_back(p->value.shape());
  }
}

double Adam::step() {
  ++state_.step;
  // The first update runs at step 1 of the warm-up ramp, never at lr 0.
  const double lr = warmup_lr(config_.lr, state_.step, config_.warmup_steps);
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.step));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (p.grad.shape() != p.value.shape()) continue;
    Tensor& m = state_.m[k];
    Tensor& v = state_.v[k];
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double g = p.grad[i];
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<Scalar>(mi);
      v[i] = static_cast<Scalar>(vi);
      p.value[i] -= static_cast<Scalar>(lr * (mi / c1) / (std::sqrt(vi / c2) + config_.eps));
    }
  }
  return lr;
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::load_state(AdamState state) {
  if (state.m.size() != params_.size() || state.v.size() != params_.size()) {
    throw ValidationError("optimizer state holds " + std::to_string(state.m.size()) + " slots for " +
                          std::to_string(params_.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (state.m[k].shape() != params_[k]->value.shape() || state.v[k].shape() != params_[k]->value.shape()) {
      throw DimensionError("optimizer state for " + params_[k]->name + " has shape " + shape_str(state.m[k].shape()));
    }
  }
  state_ = std::move(state);
}

double grad_norm(const std::vector<Parameter*>& params) {
  double ss = 0.0;
  for (const auto* p : params) {
    for (auto g : p->grad.values()) ss += static_cast<double>(g) * g;
  }
  return std::sqrt(ss);
}

void clip_grad_norm(const std::vector<Parameter*>& params, double max_norm) {
  const double n = grad_norm(params);
  if (n <= max_norm || n == 0.0) return;
  const auto s = static_cast<Scalar>(max_norm / n);
  for (auto* p : params) {
    for (auto& g : p->grad.values()) g *= s;
  }
}

}  // namespace pgr2m::nn
