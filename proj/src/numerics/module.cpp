#include "pgr2m/numerics/module.hpp"

#include "pgr2m/error.hpp"
#include "pgr2m/numerics/ops.hpp"

namespace pgr2m::nn {

Parameter& ParamStore::add(std::string name, Tensor value) {
  if (find(name)) throw ValidationError("duplicate parameter '" + name + "'");
  items_.emplace_back(std::move(name), std::move(value));
  return items_.back();
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : items_) out.push_back(&p);
  return out;
}

Parameter* ParamStore::find(const std::string& name) {
  for (auto& p : items_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Parameter* ParamStore::find(const std::string& name) const {
  for (const auto& p : items_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::size_t ParamStore::numel() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.value.numel();
  return n;
}

std::vector<Tensor> ParamStore::snapshot() const {
  std::vector<Tensor> out;
  for (const auto& p : items_) out.push_back(p.value);
  return out;
}

void ParamStore::restore(const std::vector<Tensor>& values) {
  if (values.size() != items_.size()) throw DimensionError("snapshot does not match the parameter list");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != items_[i].value.shape()) {
      throw DimensionError("snapshot shape mismatch for '" + items_[i].name + "'");
    }
    items_[i].value = values[i];
  }
}

Var bind(Tape& t, const Parameter& p) {
  if (!t.grad_enabled()) return t.frozen(p);
  return t.param(const_cast<Parameter&>(p));
}

Linear Linear::make(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                    bool with_bias, double gain) {
  Linear l;
  l.weight = &ps.add(name + ".weight", fan_in_init({in, out}, in, rng, gain));
  if (with_bias) l.bias = &ps.add(name + ".bias", Tensor({out}));
  return l;
}

Var Linear::operator()(Tape& t, Var x) const {
  Var y = matmul(x, bind(t, *weight));
  return bias ? add_broadcast(y, bind(t, *bias)) : y;
}

Conv1d Conv1d::make(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
                    std::size_t stride, Rng& rng, double gain) {
  Conv1d c;
  c.weight = &ps.add(name + ".weight", fan_in_init({kernel, in, out}, kernel * in, rng, gain));
  c.bias = &ps.add(name + ".bias", Tensor({out}));
  c.stride = stride;
  c.padding = kernel / 2;
  return c;
}

Var Conv1d::operator()(Tape& t, Var x) const {
  return conv1d(x, bind(t, *weight), bind(t, *bias), stride, padding);
}

}  // namespace pgr2m::nn
