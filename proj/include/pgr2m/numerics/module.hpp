#pragma once

#include <deque>
#include <string>
#include <vector>

#include "pgr2m/numerics/init.hpp"
#include "pgr2m/numerics/tape.hpp"

namespace pgr2m::nn {

// Owns a model's parameters at stable addresses, in registration order.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Parameter& add(std::string name, Tensor value);
  std::vector<Parameter*> all();
  const std::deque<Parameter>& items() const noexcept { return items_; }
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  std::size_t numel() const;

  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

 private:
  std::deque<Parameter> items_;
};

// Parameter on a tape: differentiable on training tapes, a read-only view on
// inference tapes (safe to share across threads).
Var bind(Tape& t, const Parameter& p);

struct Linear {
  const Parameter* weight = nullptr;  // [in, out]
  const Parameter* bias = nullptr;    // [out] or null
  static Linear make(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                     bool with_bias = true, double gain = 1.0);
  Var operator()(Tape& t, Var x) const;
};

struct Conv1d {
  const Parameter* weight = nullptr;  // [K, C_in, C_out]
  const Parameter* bias = nullptr;    // [C_out]
  std::size_t stride = 1;
  std::size_t padding = 1;
  static Conv1d make(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
                     std::size_t stride, Rng& rng, double gain = 1.0);
  Var operator()(Tape& t, Var x) const;
};

}  // namespace pgr2m::nn
