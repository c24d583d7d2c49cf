// Finite-difference checks run against the 64-bit build of the library.
#include <cmath>

#include "doctest.h"
#include "pgr2m/numerics/gradcheck.hpp"
#include "pgr2m/numerics/init.hpp"
#include "pgr2m/numerics/ops.hpp"

using namespace pgr2m::nn;

namespace {

constexpr double kPrimitiveTol = 1e-4;

// Random projection turns any output into a scalar with a generic gradient.
Var project(Tape& t, Var y, std::uint64_t seed) {
  Rng rng(seed);
  auto w = t.constant(rand_uniform(y.shape(), rng, -1, 1));
  return sum(mul(y, w));
}

Tensor inputs(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  return rand_uniform(std::move(s), rng, -2, 2);
}

}  // namespace

static_assert(sizeof(Scalar) == 8, "gradient tests require the 64-bit build");

TEST_CASE("grad_check on sum of squares") {
  auto f = [](Tape&, Var x) { return sum(square(x)); };
  CHECK(grad_check(f, Tensor({2}, {1, 2})) < 1e-5);
}

TEST_CASE("grad_check on rmsnorm followed by sum") {
  Tensor g({5}, {1.0, 0.5, -1.5, 2.0, 0.7});
  auto f = [&](Tape& t, Var x) { return sum(rmsnorm(x, t.constant(g))); };
  CHECK(grad_check(f, inputs({3, 5}, 1)) < 1e-4);
}

TEST_CASE("every primitive matches central differences") {
  const Tensor other = inputs({3, 4}, 99);
  const Tensor gain = inputs({4}, 98);
  const Tensor right = inputs({4, 2}, 97);

  auto check = [](const char* name, const std::function<Var(Tape&, Var)>& f, const Tensor& x) {
    INFO(name);
    CHECK(grad_check(f, x) < kPrimitiveTol);
  };

  check("add", [&](Tape& t, Var x) { return project(t, add(x, t.constant(other)), 1); }, inputs({3, 4}, 2));
  check("sub", [&](Tape& t, Var x) { return project(t, sub(t.constant(other), x), 1); }, inputs({3, 4}, 3));
  check("mul", [&](Tape& t, Var x) { return project(t, mul(x, t.constant(other)), 1); }, inputs({3, 4}, 4));
  check("scale", [&](Tape& t, Var x) { return project(t, scale(x, 1.7), 1); }, inputs({3, 4}, 5));
  check("add_broadcast", [&](Tape& t, Var x) { return project(t, add_broadcast(t.constant(other), x), 1); },
        inputs({4}, 6));
  check("relu", [&](Tape& t, Var x) { return project(t, relu(x), 1); }, inputs({3, 4}, 7));
  check("sigmoid", [&](Tape& t, Var x) { return project(t, sigmoid(x), 1); }, inputs({3, 4}, 8));
  check("abs", [&](Tape& t, Var x) { return project(t, abs(x), 1); }, inputs({3, 4}, 9));
  check("square", [&](Tape& t, Var x) { return project(t, square(x), 1); }, inputs({3, 4}, 10));
  check("mean", [&](Tape& t, Var x) { return mean(mul(x, t.constant(other))); }, inputs({3, 4}, 11));
  check("reshape", [&](Tape& t, Var x) { return project(t, reshape(x, {2, 6}), 1); }, inputs({3, 4}, 12));
  check("permute", [&](Tape& t, Var x) { return project(t, permute(x, {2, 0, 1}), 1); }, inputs({2, 3, 4}, 13));
  check("concat", [&](Tape& t, Var x) { return project(t, concat({x, t.constant(other), x}, 0), 1); },
        inputs({3, 4}, 14));
  check("slice", [&](Tape& t, Var x) { return project(t, slice(x, 1, 1, 3), 1); }, inputs({3, 4}, 15));
  check("matmul left", [&](Tape& t, Var x) { return project(t, matmul(x, t.constant(right)), 1); }, inputs({3, 4}, 16));
  check("matmul right", [&](Tape& t, Var x) { return project(t, matmul(t.constant(other), x), 1); },
        inputs({4, 2}, 17));
  const Tensor batch = inputs({2, 3, 4}, 96);
  check("bmm", [&](Tape& t, Var x) { return project(t, bmm(t.constant(batch), x), 1); }, inputs({2, 4, 5}, 18));
  check("bmm transposed", [&](Tape& t, Var x) { return project(t, bmm(x, t.constant(batch), true), 1); },
        inputs({2, 5, 4}, 19));
  check("softmax_rows", [&](Tape& t, Var x) { return project(t, softmax_rows(x), 1); }, inputs({3, 4}, 20));
  check("rmsnorm input", [&](Tape& t, Var x) { return project(t, rmsnorm(x, t.constant(gain)), 1); },
        inputs({3, 4}, 21));
  check("rmsnorm gain", [&](Tape& t, Var x) { return project(t, rmsnorm(t.constant(other), x), 1); }, inputs({4}, 22));
  check("entropy_rows", [&](Tape& t, Var x) { return project(t, entropy_rows(softmax_rows(x)), 1); },
        inputs({3, 4}, 23));
  check("mean_rows", [&](Tape& t, Var x) { return project(t, mean_rows(x), 1); }, inputs({3, 4}, 24));
  check("row_sums", [&](Tape& t, Var x) { return project(t, row_sums(x), 2); }, inputs({3, 4}, 25));
  const Tensor kernel = inputs({3, 4, 2}, 95);
  const Tensor bias = inputs({2}, 94);
  check("conv1d input", [&](Tape& t, Var x) { return project(t, conv1d(x, t.constant(kernel), t.constant(bias), 2, 1), 1); },
        inputs({2, 7, 4}, 25));
  const Tensor signal = inputs({2, 7, 4}, 93);
  check("conv1d weight", [&](Tape& t, Var x) { return project(t, conv1d(t.constant(signal), x, t.constant(bias), 1, 1), 1); },
        inputs({3, 4, 2}, 26));
  check("conv1d bias", [&](Tape& t, Var x) { return project(t, conv1d(t.constant(signal), t.constant(kernel), x, 2, 0), 1); },
        inputs({2}, 27));
  check("upsample", [&](Tape& t, Var x) { return project(t, upsample_nearest(x, 3), 1); }, inputs({2, 3, 2}, 28));
  check("embedding", [&](Tape& t, Var x) { return project(t, embedding(x, {2, -1, 0, 2}), 1); }, inputs({3, 4}, 29));
  check("embedding_bag_mean", [&](Tape& t, Var x) { return project(t, embedding_bag_mean(x, {{0, 2}, {1}, {}}), 1); },
        inputs({3, 4}, 30));
  const Tensor targets({3, 4}, {1, 0, 0, 1, 0, 1, 1, 0, 1, 1, 0, 0});
  const Tensor weights({3, 4}, 0.25);
  check("bce_with_logits", [&](Tape&, Var x) { return bce_with_logits(x, targets, weights); }, inputs({3, 4}, 31));
  check("cross_entropy", [&](Tape&, Var x) { return cross_entropy(x, {3, 0, 2}, {0.5, 1.0, 0.25}); }, inputs({3, 4}, 32));
}

TEST_CASE("straight-through passes the gradient to its target only") {
  Parameter a("a", inputs({2, 3}, 40)), b("b", inputs({2, 3}, 41));
  Tape t;
  auto y = straight_through(t.param(a), t.param(b));
  for (std::size_t i = 0; i < 6; ++i) CHECK(y.value()[i] == a.value[i]);
  t.backward(sum(y));
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(a.grad[i] == 0);
    CHECK(b.grad[i] == 1);
  }
}

TEST_CASE("stop-gradient blocks the path") {
  Parameter a("a", inputs({2, 2}, 42));
  Tape t;
  t.backward(sum(square(stop_gradient(t.param(a)))));
  for (auto g : a.grad.values()) CHECK(g == 0);
}

TEST_CASE("finite differences hold detached values fixed") {
  Parameter a("a", inputs({2, 3}, 43)), b("b", inputs({2, 3}, 44));
  auto loss = [&](Tape& t) {
    Var x = t.param(a), y = t.param(b);
    return sum(add(square(straight_through(square(x), y)), mul(stop_gradient(x), y)));
  };
  CHECK(grad_check_params(loss, {&a, &b}).max_rel_error < 1e-6);
}
