#pragma once

#include <cstddef>
#include <vector>

#include "pgr2m/numerics/tape.hpp"

// Differentiable primitives. Every function records one node on the tape of
// its first argument; all operands must live on the same tape.
namespace pgr2m::nn {

// Elementwise, equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, Scalar s);
// b's shape equals the trailing dimensions of a (bias rows, shared masks).
Var add_broadcast(Var a, Var b);
Var relu(Var a);
Var sigmoid(Var a);
Var abs(Var a);
Var square(Var a);

// Reductions to a single-element tensor of shape {1}.
Var sum(Var a);
Var mean(Var a);

Var reshape(Var a, Shape shape);
Var permute(Var a, const std::vector<std::size_t>& perm);
Var transpose(Var a);  // rank 2
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);

// sg(.): same value, no gradient.
Var stop_gradient(Var a);
// Value of `forward_value`, gradient routed unchanged to `grad_target`.
Var straight_through(Var forward_value, Var grad_target);

// a: [..., k] (leading dims flattened), b: [k, n] -> [..., n].
Var matmul(Var a, Var b);
// a: [B, m, k]; b: [B, k, n], or [B, n, k] when transpose_b.
Var bmm(Var a, Var b, bool transpose_b = false);

// Row operations act on the last axis.
Var softmax_rows(Var x);
Tensor hardmax_rows(const Tensor& x);
Var hardmax_rows(Var x);
std::vector<std::size_t> argmax_rows(const Tensor& x);
Var rmsnorm(Var x, Var gain, Scalar eps = Scalar(1e-6));
// Shannon entropy (nats) of each row of a distribution: [.., n] -> [rows].
Var entropy_rows(Var p);
// Sum over the last axis: [..., n] -> [...] ([1] for a vector).
Var row_sums(Var x);
// Column mean of a [m, n] matrix (or flattened leading dims) -> [n].
Var mean_rows(Var x);

// x: [B, L, C_in]; weight: [K, C_in, C_out]; bias: [C_out].
// Cross-correlation with zero padding; L_out = (L + 2*padding - K) / stride + 1.
Var conv1d(Var x, Var weight, Var bias, std::size_t stride, std::size_t padding);
// x: [B, L, C] -> [B, L*factor, C], each frame repeated.
Var upsample_nearest(Var x, std::size_t factor);

// Row lookup: [V, D] -> [n, D]; a negative index yields a zero row.
Var embedding(Var table, const std::vector<long>& indices);
// Mean of looked-up rows per bag -> [bags, D]. Empty bags give zero rows.
Var embedding_bag_mean(Var table, const std::vector<std::vector<std::size_t>>& bags);

// Sum over entries of weight * binary cross-entropy(sigmoid(logit), target).
Var bce_with_logits(Var logits, const Tensor& targets, const Tensor& weights);
// Sum over rows of weight * -log softmax(logits)[target]; rows of the last axis.
Var cross_entropy(Var logits, const std::vector<std::size_t>& targets,
                  const std::vector<Scalar>& weights);

namespace detail {
// C (m x n) = op(A) * op(B) (+ C when accumulate).
void gemm(const Scalar* a, const Scalar* b, Scalar* c, std::size_t m, std::size_t k, std::size_t n,
          bool trans_a, bool trans_b, bool accumulate);
}  // namespace detail

}  // namespace pgr2m::nn
