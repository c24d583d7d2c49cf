#include "pgr2m/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "pgr2m/error.hpp"

namespace pgr2m::nn {

namespace {

double eval_scalar(const std::function<Var(Tape&)>& loss, DetachedPins& pins) {
  Tape tape(false);
  pins.next = 0;
  tape.use_pins(&pins);
  const double v = loss(tape).value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
  return v;
}

double rel_error(double ad, double fd) { return std::abs(ad - fd) / std::max(1.0, std::abs(fd)); }

}  // namespace

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h) {
  Parameter p("x", x);
  auto loss = [&](Tape& t) { return f(t, t.param(p)); };
  return grad_check_params(loss, {&p}, h).max_rel_error;
}

GradCheckReport grad_check_params(const std::function<Var(Tape&)>& loss, const std::vector<Parameter*>& params,
                                  double h, std::size_t max_coords_per_param) {
  for (auto* p : params) p->zero_grad();
  DetachedPins pins;
  {
    Tape tape;
    tape.use_pins(&pins);
    Var l = loss(tape);
    if (!std::isfinite(static_cast<double>(l.value().item()))) {
      throw NumericError("grad_check: function value is not finite");
    }
    tape.backward(l);
  }
  pins.replay = true;
  GradCheckReport report;
  for (auto* p : params) {
    const std::size_t n = p->value.numel();
    const std::size_t probes = (max_coords_per_param == 0 || max_coords_per_param >= n) ? n : max_coords_per_param;
    for (std::size_t k = 0; k < probes; ++k) {
      const std::size_t i = probes == n ? k : (k * n) / probes;
      const Scalar orig = p->value[i];
      p->value[i] = static_cast<Scalar>(orig + h);
      const double fp = eval_scalar(loss, pins);
      p->value[i] = static_cast<Scalar>(orig - h);
      const double fm = eval_scalar(loss, pins);
      p->value[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double err = rel_error(p->grad[i], fd);
      ++report.coordinates;
      if (err >= report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace pgr2m::nn
