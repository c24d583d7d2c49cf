#include <cmath>

#include "doctest.h"
#include "pgr2m/error.hpp"
#include "pgr2m/numerics/init.hpp"
#include "pgr2m/numerics/ops.hpp"
#include "pgr2m/numerics/optim.hpp"

using namespace pgr2m::nn;

namespace {

Tensor triple_loop_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Scalar acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      c.at(i, j) = acc;
    }
  return c;
}

Tensor integer_tensor(Shape s, Rng& rng) {
  Tensor t(std::move(s));
  for (auto& v : t.values()) v = static_cast<Scalar>(static_cast<int>(uniform01(rng) * 11) - 5);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and projector") {
  Tape t(false);
  auto I = t.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  auto A = t.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  CHECK(matmul(I, A).value().values()[3] == 4);
  auto out = matmul(I, A).value();
  CHECK(std::vector<Scalar>(out.values().begin(), out.values().end()) == std::vector<Scalar>{1, 2, 3, 4});
  auto P = t.constant(Tensor::matrix({{1, 0}, {0, 0}}));
  auto v = t.constant(Tensor::matrix({{5}, {7}}));
  auto pv = matmul(P, v).value();
  CHECK(pv[0] == 5);
  CHECK(pv[1] == 0);
}

TEST_CASE("matmul equals the triple-loop oracle exactly on integer inputs") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tape t(false);
    Tensor a = integer_tensor({3, 4}, rng), b = integer_tensor({4, 2}, rng);
    auto got = matmul(t.constant(a), t.constant(b)).value();
    auto want = triple_loop_matmul(a, b);
    for (std::size_t i = 0; i < want.numel(); ++i) CHECK(got[i] == want[i]);
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape t(false);
  auto a = t.constant(Tensor({3, 4}));
  auto b = t.constant(Tensor({3, 2}));
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const pgr2m::DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[3x4]") != std::string::npos);
    CHECK(msg.find("[3x2]") != std::string::npos);
  }
}

TEST_CASE("softmax rows") {
  Tape t(false);
  auto u = softmax_rows(t.constant(Tensor::matrix({{0, 0, 0}}))).value();
  for (int j = 0; j < 3; ++j) CHECK(u[j] == doctest::Approx(1.0 / 3).epsilon(1e-7));

  auto big = softmax_rows(t.constant(Tensor::matrix({{1000, 0}}))).value();
  CHECK(std::abs(big[0] - 1.0) <= 1e-9);
  CHECK(std::abs(big[1]) <= 1e-9);

  auto s = softmax_rows(t.constant(Tensor::matrix({{1, 2, 3}}))).value();
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(s[j] - std::exp(j + 1.0) / z) <= 1e-6);

  Rng rng(3);
  auto r = softmax_rows(t.constant(rand_uniform({50, 9}, rng, -5, 5))).value();
  for (std::size_t i = 0; i < 50; ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < 9; ++j) {
      CHECK(r.at(i, j) >= 0);
      acc += r.at(i, j);
    }
    CHECK(std::abs(acc - 1.0) <= 1e-6);
  }
}

TEST_CASE("softmax rejects NaN") {
  Tape t(false);
  CHECK_THROWS_AS(softmax_rows(t.constant(Tensor::matrix({{1, NAN}}))), pgr2m::NumericError);
}

TEST_CASE("hardmax rows are one-hot with lowest-index ties") {
  auto h = hardmax_rows(Tensor::matrix({{0.1f, 0.9f}, {5, 5}}));
  CHECK(h.at(0, 0) == 0);
  CHECK(h.at(0, 1) == 1);
  CHECK(h.at(1, 0) == 1);
  CHECK(h.at(1, 1) == 0);
  Rng rng(11);
  auto r = hardmax_rows(rand_uniform({40, 7}, rng, -2, 2));
  for (std::size_t i = 0; i < 40; ++i) {
    int ones = 0;
    for (std::size_t j = 0; j < 7; ++j) {
      CHECK((r.at(i, j) == 0 || r.at(i, j) == 1));
      ones += r.at(i, j) == 1;
    }
    CHECK(ones == 1);
  }
}

TEST_CASE("rmsnorm") {
  Tape t(false);
  auto gain = t.constant(Tensor({4}, Scalar(1)));
  auto c = rmsnorm(t.constant(Tensor::matrix({{-3, -3, -3, -3}})), gain).value();
  for (int j = 0; j < 4; ++j) CHECK(c[j] == doctest::Approx(-3.0 / std::sqrt(9.0 + 1e-6)).epsilon(1e-6));

  auto z = rmsnorm(t.constant(Tensor({1, 4})), gain).value();
  for (int j = 0; j < 4; ++j) CHECK(z[j] == 0);

  Rng rng(5);
  auto r = rmsnorm(t.constant(rand_uniform({1, 16}, rng, -2, 2)), t.constant(Tensor({16}, Scalar(1)))).value();
  double ss = 0;
  for (auto v : r.values()) ss += v * v;
  CHECK(std::abs(std::sqrt(ss / 16) - 1.0) <= 1e-3);
}

TEST_CASE("conv1d identity kernel, stride and sliding-window oracle") {
  Rng rng(9);
  Tape t(false);
  Tensor x = rand_uniform({2, 10, 3}, rng, -1, 1);
  Tensor w({3, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) w[(1 * 3 + c) * 3 + c] = 1;  // center tap, identity channel map
  auto y = conv1d(t.constant(x), t.constant(w), t.constant(Tensor({3})), 1, 1).value();
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);

  Tensor x64 = rand_uniform({1, 64, 2}, rng, -1, 1);
  Tensor w4 = rand_uniform({4, 2, 5}, rng, -1, 1);
  auto y16 = conv1d(t.constant(x64), t.constant(w4), t.constant(Tensor({5})), 4, 0).value();
  CHECK(y16.shape() == Shape{1, 16, 5});

  // Sliding-window oracle with padding 1, stride 2.
  Tensor xs = rand_uniform({2, 9, 3}, rng, -1, 1);
  Tensor ws = rand_uniform({3, 3, 4}, rng, -1, 1);
  Tensor bs = rand_uniform({4}, rng, -1, 1);
  auto got = conv1d(t.constant(xs), t.constant(ws), t.constant(bs), 2, 1).value();
  const std::size_t Lout = (9 + 2 - 3) / 2 + 1;
  REQUIRE(got.shape() == Shape{2, Lout, 4});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t o = 0; o < Lout; ++o)
      for (std::size_t co = 0; co < 4; ++co) {
        double acc = bs[co];
        for (std::size_t k = 0; k < 3; ++k) {
          const long src = static_cast<long>(o * 2 + k) - 1;
          if (src < 0 || src >= 9) continue;
          for (std::size_t ci = 0; ci < 3; ++ci)
            acc += xs[(b * 9 + static_cast<std::size_t>(src)) * 3 + ci] * ws[(k * 3 + ci) * 4 + co];
        }
        CHECK(std::abs(got[(b * Lout + o) * 4 + co] - acc) <= 1e-6);
      }
}

TEST_CASE("conv1d with stride l maps L to L/l") {
  Rng rng(2);
  Tape t(false);
  for (std::size_t l : {1u, 2u, 4u}) {
    Tensor x = rand_uniform({1, 32, 2}, rng, -1, 1);
    auto y = conv1d(t.constant(x), t.constant(Tensor({l, 2, 2})), t.constant(Tensor({2})), l, 0).value();
    CHECK(y.dim(1) == 32 / l);
  }
  CHECK_THROWS_AS(conv1d(t.constant(Tensor({1, 8, 2})), t.constant(Tensor({3, 2, 2})), t.constant(Tensor({2})), 0, 1),
                  pgr2m::ConfigError);
}

TEST_CASE("upsample repeats frames") {
  Tape t(false);
  Tensor x({1, 2, 1}, {3, 4});
  auto y = upsample_nearest(t.constant(x), 4).value();
  CHECK(y.shape() == Shape{1, 8, 1});
  for (int i = 0; i < 8; ++i) CHECK(y[i] == (i < 4 ? 3 : 4));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Parameter p("p", Tensor({3}, {1, -2, 3}));
  Adam opt({&p}, AdamConfig{});
  for (int i = 0; i < 10; ++i) {
    opt.zero_grad();
    opt.step();
  }
  CHECK(p.value[0] == 1);
  CHECK(p.value[1] == -2);
  CHECK(p.value[2] == 3);
}

TEST_CASE("warm-up schedule") {
  CHECK(warmup_lr(2e-4, 500, 1000) == doctest::Approx(1e-4));
  CHECK(warmup_lr(2e-4, 0, 1000) == 0.0);
  CHECK(warmup_lr(2e-4, 1000, 1000) == doctest::Approx(2e-4));
  CHECK(warmup_lr(2e-4, 5000, 1000) == doctest::Approx(2e-4));
}

TEST_CASE("adam converges on a quadratic bowl") {
  Parameter p("p", Tensor({2}, {3, -4}));
  const Tensor target({2}, {0.5f, 1.5f});
  AdamConfig cfg;
  cfg.lr = 0.05;
  cfg.warmup_steps = 0;
  Adam opt({&p}, cfg);
  for (int step = 0; step < 2000; ++step) {
    opt.zero_grad();
    Tape t;
    auto d = sub(t.param(p), t.constant(target));
    t.backward(sum(square(d)));
    opt.step();
  }
  CHECK(std::abs(p.value[0] - 0.5) < 1e-3);
  CHECK(std::abs(p.value[1] - 1.5) < 1e-3);
}

TEST_CASE("backward reaches every parameter with finite gradients") {
  Rng rng(1);
  Parameter w("w", randn({4, 3}, rng)), b("b", randn({3}, rng)), g("g", Tensor({3}, Scalar(1)));
  Tape t;
  auto x = t.constant(randn({5, 4}, rng));
  auto y = rmsnorm(relu(add_broadcast(matmul(x, t.param(w)), t.param(b))), t.param(g));
  t.backward(mean(square(y)));
  for (auto* p : {&w, &b, &g}) {
    CHECK(p->grad.shape() == p->value.shape());
    CHECK(p->grad.all_finite());
  }
}

TEST_CASE("inference tape records no gradients") {
  Parameter w("w", Tensor({2, 2}, Scalar(1)));
  Tape t(false);
  auto y = matmul(t.constant(Tensor({1, 2}, Scalar(1))), t.param(w));
  CHECK_FALSE(y.requires_grad());
}
