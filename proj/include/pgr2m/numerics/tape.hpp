#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pgr2m/numerics/tensor.hpp"

namespace pgr2m::nn {

// A learnable tensor living outside any tape. Gradients from backward passes
// accumulate into `grad` until zero_grad().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad = Tensor(value.shape()); }
};

class Tape;

// Values cut out of differentiation (stop-gradient outputs, straight-through
// offsets). A recording tape appends them; a replaying tape reads them back in
// the same order, so perturbed re-evaluations treat them as constants.
struct DetachedPins {
  std::vector<Tensor> values;
  std::size_t next = 0;
  bool replay = false;
};

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  std::size_t numel() const { return value().numel(); }
  bool requires_grad() const;
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Ordered record of primitive operations. Nodes are appended in evaluation
// order, which is already a topological order, so backward() simply replays
// the recorded rules from the last node to the first.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  // With grad disabled nothing requires grad and no backward rules are kept;
  // used for frozen-model inference.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Records a parameter by reference; its value is not copied.
  Var param(Parameter& p);
  // Read-only view of a parameter, excluded from differentiation.
  Var frozen(const Parameter& p);

  // Appends an operation result. `backward` is dropped when no input needs grad.
  Var record(Tensor value, bool requires_grad, Backward backward);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  // Gradient buffer of a node, allocated on first use; nullptr when the node
  // does not require grad. Valid only during backward().
  Tensor* grad_buffer(std::size_t id);
  // Gradient of a node after backward(); empty tensor when never reached.
  const Tensor& grad(Var v) const { return nodes_[v.id()].grad; }

  // Seeds d(loss)/d(loss) = 1 for a single-element loss and replays every rule.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  void use_pins(DetachedPins* pins) noexcept { pins_ = pins; }
  bool pinning() const noexcept { return pins_ != nullptr; }
  bool replaying() const noexcept { return pins_ != nullptr && pins_->replay; }
  // The pinned value when replaying, otherwise `v` (recorded when pinning).
  Tensor detached(Tensor v);

 private:
  struct Node {
    Tensor owned;
    const Tensor* view = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_;
  DetachedPins* pins_ = nullptr;
};

}  // namespace pgr2m::nn
