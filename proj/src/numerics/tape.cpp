#include "pgr2m/numerics/tape.hpp"

#include "pgr2m/error.hpp"

namespace pgr2m::nn {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Tensor Tape::detached(Tensor v) {
  if (pins_ == nullptr) return v;
  if (!pins_->replay) {
    pins_->values.push_back(v);
    return v;
  }
  if (pins_->next >= pins_->values.size() || pins_->values[pins_->next].shape() != v.shape()) {
    throw NumericError("detached value replay diverged from the recorded evaluation");
  }
  return pins_->values[pins_->next++];
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  Node n;
  n.view = &p.value;
  n.requires_grad = grad_enabled_;
  n.param = grad_enabled_ ? &p : nullptr;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::frozen(const Parameter& p) {
  Node n;
  n.view = &p.value;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, bool requires_grad, Backward backward) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = grad_enabled_ && requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.view ? *n.view : n.owned;
}

Tensor* Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(value(id).shape());
  return &n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ValidationError("backward() on a foreign tape");
  if (loss.numel() != 1) throw DimensionError("backward() needs a single-element loss, got " + shape_str(loss.shape()));
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())->fill(Scalar(1));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) {
      // The rule may touch other nodes' grads but never this node's.
      n.backward(*this, n.grad);
    }
    if (n.param) {
      Tensor& g = n.param->grad;
      if (g.shape() != n.grad.shape()) g = Tensor(n.grad.shape());
      for (std::size_t k = 0; k < g.numel(); ++k) g[k] += n.grad[k];
    }
  }
}

}  // namespace pgr2m::nn
