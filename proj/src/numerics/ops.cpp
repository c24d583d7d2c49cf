#include "pgr2m/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "pgr2m/error.hpp"

namespace pgr2m::nn {

namespace detail {

using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

void gemm(const Scalar* a, const Scalar* b, Scalar* c, std::size_t m, std::size_t k, std::size_t n,
          bool trans_a, bool trans_b, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m);
  const auto K = static_cast<Eigen::Index>(k);
  const auto N = static_cast<Eigen::Index>(n);
  MMap C(c, M, N);
  if (!accumulate) C.setZero();
  if (m == 0 || n == 0 || k == 0) return;
  if (!trans_a && !trans_b) {
    C.noalias() += CMap(a, M, K) * CMap(b, K, N);
  } else if (!trans_a && trans_b) {
    C.noalias() += CMap(a, M, K) * CMap(b, N, K).transpose();
  } else if (trans_a && !trans_b) {
    C.noalias() += CMap(a, K, M).transpose() * CMap(b, K, N);
  } else {
    C.noalias() += CMap(a, K, M).transpose() * CMap(b, N, K).transpose();
  }
}

}  // namespace detail

namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw ValidationError("operands recorded on different tapes");
  return *a.tape();
}

void check_same(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
}

void accumulate(Tape& t, std::size_t id, const Tensor& g) {
  if (Tensor* dst = t.grad_buffer(id)) {
    for (std::size_t i = 0; i < g.numel(); ++i) (*dst)[i] += g[i];
  }
}

void check_finite_input(const char* op, const Tensor& x) {
  for (auto v : x.values()) {
    if (std::isnan(v)) throw NumericError(std::string(op) + ": NaN input");
  }
}

Shape with_last(const Shape& s, std::size_t last) {
  Shape out = s;
  out.back() = last;
  return out;
}

// Number of rows when the last axis is treated as the row.
std::size_t row_count(const Tensor& x) { return x.numel() / x.shape().back(); }

}  // namespace

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  check_same("add", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& tp, const Tensor& g) {
    accumulate(tp, ia, g);
    accumulate(tp, ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  check_same("sub", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& tp, const Tensor& g) {
    accumulate(tp, ia, g);
    if (Tensor* gb = tp.grad_buffer(ib)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  check_same("mul", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(ia);
    const Tensor& bv2 = tp.value(ib);
    if (Tensor* ga = tp.grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * bv2[i];
    }
    if (Tensor* gb = tp.grad_buffer(ib)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, Scalar s) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (auto& v : out.values()) v *= s;
  const auto ia = a.id();
  return t.record(std::move(out), a.requires_grad(), [ia, s](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += s * g[i];
    }
  });
}

Var add_broadcast(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() || !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
    throw DimensionError("add_broadcast: " + shape_str(sb) + " is not a suffix of " + shape_str(sa));
  }
  const std::size_t inner = b.numel();
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i % inner];
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib, inner](Tape& tp, const Tensor& g) {
    accumulate(tp, ia, g);
    if (Tensor* gb = tp.grad_buffer(ib)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i % inner] += g[i];
    }
  });
}

Var relu(Var a) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (auto& v : out.values()) v = v > 0 ? v : Scalar(0);
  const auto ia = a.id();
  return t.record(std::move(out), a.requires_grad(), [ia](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(ia);
    if (Tensor* ga = tp.grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.numel(); ++i) {
        if (av[i] > 0) (*ga)[i] += g[i];
      }
    }
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (auto& v : out.values()) v = Scalar(1) / (Scalar(1) + std::exp(-v));
  const auto ia = a.id();
  const auto self = t.size();
  return t.record(std::move(out), a.requires_grad(), [ia, self](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(self);
    if (Tensor* ga = tp.grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * y[i] * (Scalar(1) - y[i]);
    }
  });
}

Var abs(Var a) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::abs(v);
  const auto ia = a.id();
  return t.record(std::move(out), a.requires_grad(), [ia](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(ia);
    if (Tensor* ga = tp.grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.numel(); ++i) {
        const Scalar s = av[i] > 0 ? Scalar(1) : (av[i] < 0 ? Scalar(-1) : Scalar(0));
        (*ga)[i] += g[i] * s;
      }
    }
  });
}

Var square(Var a) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (auto& v : out.values()) v = v * v;
  const auto ia = a.id();
  return t.record(std::move(out), a.requires_grad(), [ia](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(ia);
    if (Tensor* ga = tp.grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += Scalar(2) * av[i] * g[i];
    }
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  double acc = 0.0;
  for (auto v : a.value().values()) acc += v;
  const auto ia = a.id();
  return t.record(Tensor::scalar(static_cast<Scalar>(acc)), a.requires_grad(), [ia](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(ia)) {
      for (auto& v : ga->values()) v += g[0];
    }
  });
}

Var mean(Var a) {
  Tape& t = *a.tape();
  double acc = 0.0;
  for (auto v : a.value().values()) acc += v;
  const double n = static_cast<double>(a.numel());
  const auto ia = a.id();
  return t.record(Tensor::scalar(static_cast<Scalar>(acc / n)), a.requires_grad(), [ia, n](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(ia)) {
      const Scalar s = static_cast<Scalar>(g[0] / n);
      for (auto& v : ga->values()) v += s;
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = *a.tape();
  Tensor out = a.value().reshaped(std::move(shape));
  const auto ia = a.id();
  return t.record(std::move(out), a.requires_grad(), [ia](Tape& tp, const Tensor& g) { accumulate(tp, ia, g); });
}

namespace {

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// out[i] = in[src(i)], the permuted gather used in both directions.
std::vector<std::size_t> permute_index(const Shape& in_shape, const std::vector<std::size_t>& perm) {
  const std::size_t r = in_shape.size();
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[perm[i]];
  const auto in_st = strides_of(in_shape);
  const std::size_t n = shape_numel(in_shape);
  std::vector<std::size_t> src(n);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_st[perm[i]];
    src[o] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  return src;
}

}  // namespace

Var permute(Var a, const std::vector<std::size_t>& perm) {
  Tape& t = *a.tape();
  const Shape& s = a.shape();
  if (perm.size() != s.size()) throw DimensionError("permute: rank mismatch for " + shape_str(s));
  std::vector<bool> seen(s.size(), false);
  for (auto p : perm) {
    if (p >= s.size() || seen[p]) throw DimensionError("permute: invalid axis order");
    seen[p] = true;
  }
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out_shape[i] = s[perm[i]];
  auto src = permute_index(s, perm);
  Tensor out(out_shape);
  const Tensor& av = a.value();
  for (std::size_t o = 0; o < src.size(); ++o) out[o] = av[src[o]];
  const auto ia = a.id();
  return t.record(std::move(out), a.requires_grad(), [ia, src = std::move(src)](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(ia)) {
      for (std::size_t o = 0; o < src.size(); ++o) (*ga)[src[o]] += g[o];
    }
  });
}

Var transpose(Var a) {
  if (a.value().rank() != 2) throw DimensionError("transpose expects rank 2, got " + shape_str(a.shape()));
  return permute(a, {1, 0});
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of nothing");
  Tape& t = *parts[0].tape();
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw DimensionError("concat axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Shape out_shape = s0;
  out_shape[axis] = 0;
  bool req = false;
  std::vector<std::size_t> ids, widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (p.tape() != &t || s.size() != s0.size()) throw DimensionError("concat: incompatible parts");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) {
        throw DimensionError("concat: shapes " + shape_str(s0) + " and " + shape_str(s));
      }
    }
    out_shape[axis] += s[axis];
    widths.push_back(s[axis] * inner);
    ids.push_back(p.id());
    req = req || p.requires_grad();
  }
  const std::size_t total = out_shape[axis] * inner;
  Tensor out(out_shape);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * widths[k], widths[k], out.data() + o * total + off);
    }
    off += widths[k];
  }
  return t.record(std::move(out), req, [ids, widths, outer, total](Tape& tp, const Tensor& g) {
    std::size_t off2 = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (Tensor* gk = tp.grad_buffer(ids[k])) {
        for (std::size_t o = 0; o < outer; ++o) {
          const Scalar* src = g.data() + o * total + off2;
          Scalar* dst = gk->data() + o * widths[k];
          for (std::size_t i = 0; i < widths[k]; ++i) dst[i] += src[i];
        }
      }
      off2 += widths[k];
    }
  });
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape();
  const Shape& s = a.shape();
  if (axis >= s.size() || begin > end || end > s[axis]) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " of " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  const std::size_t in_w = s[axis] * inner, out_w = (end - begin) * inner, off = begin * inner;
  Tensor out(out_shape);
  const Tensor& av = a.value();
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(av.data() + o * in_w + off, out_w, out.data() + o * out_w);
  const auto ia = a.id();
  return t.record(std::move(out), a.requires_grad(), [ia, outer, in_w, out_w, off](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(ia)) {
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < out_w; ++i) (*ga)[o * in_w + off + i] += g[o * out_w + i];
      }
    }
  });
}

Var stop_gradient(Var a) { return a.tape()->constant(a.tape()->detached(a.value())); }

Var straight_through(Var forward_value, Var grad_target) {
  Tape& t = tape_of(forward_value, grad_target);
  check_same("straight_through", forward_value, grad_target);
  const auto ig = grad_target.id();
  Tensor value = forward_value.value();
  if (t.pinning()) {
    const Tensor& tv = grad_target.value();
    Tensor offset = value;
    for (std::size_t i = 0; i < offset.numel(); ++i) offset[i] -= tv[i];
    const bool replay = t.replaying();
    offset = t.detached(std::move(offset));
    if (replay) {
      for (std::size_t i = 0; i < value.numel(); ++i) value[i] = tv[i] + offset[i];
    }
  }
  return t.record(std::move(value), grad_target.requires_grad(),
                  [ig](Tape& tp, const Tensor& g) { accumulate(tp, ig, g); });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() != 2 || sa.back() != sb[0]) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(sa) + " and " + shape_str(sb));
  }
  const std::size_t k = sb[0], n = sb[1], m = a.numel() / k;
  Tensor out(with_last(sa, n));
  detail::gemm(a.value().data(), b.value().data(), out.data(), m, k, n, false, false, false);
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib, m, k, n](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(ia)) {
      detail::gemm(g.data(), tp.value(ib).data(), ga->data(), m, n, k, false, true, true);
    }
    if (Tensor* gb = tp.grad_buffer(ib)) {
      detail::gemm(tp.value(ia).data(), g.data(), gb->data(), k, m, n, true, false, true);
    }
  });
}

Var bmm(Var a, Var b, bool transpose_b) {
  Tape& t = tape_of(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != (transpose_b ? sb[2] : sb[1])) {
    throw DimensionError("bmm: shapes " + shape_str(sa) + " and " + shape_str(sb) +
                         (transpose_b ? " (second transposed)" : ""));
  }
  const std::size_t B = sa[0], m = sa[1], k = sa[2], n = transpose_b ? sb[1] : sb[2];
  Tensor out({B, m, n});
  for (std::size_t i = 0; i < B; ++i) {
    detail::gemm(a.value().data() + i * m * k, b.value().data() + i * k * n, out.data() + i * m * n, m, k, n, false,
                 transpose_b, false);
  }
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                  [ia, ib, B, m, k, n, transpose_b](Tape& tp, const Tensor& g) {
                    const Tensor& av = tp.value(ia);
                    const Tensor& bv = tp.value(ib);
                    Tensor* ga = tp.grad_buffer(ia);
                    Tensor* gb = tp.grad_buffer(ib);
                    for (std::size_t i = 0; i < B; ++i) {
                      const Scalar* gi = g.data() + i * m * n;
                      if (ga) {
                        // dA = dC * op(B)^T
                        detail::gemm(gi, bv.data() + i * k * n, ga->data() + i * m * k, m, n, k, false, !transpose_b,
                                     true);
                      }
                      if (gb) {
                        if (transpose_b) {
                          // B is [n, k]: dB = dC^T * A
                          detail::gemm(gi, av.data() + i * m * k, gb->data() + i * k * n, n, m, k, true, false, true);
                        } else {
                          detail::gemm(av.data() + i * m * k, gi, gb->data() + i * k * n, k, m, n, true, false, true);
                        }
                      }
                    }
                  });
}

Var softmax_rows(Var x) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  check_finite_input("softmax_rows", xv);
  const std::size_t n = xv.shape().back(), rows = row_count(xv);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const Scalar* in = xv.data() + r * n;
    Scalar* o = out.data() + r * n;
    const Scalar mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(static_cast<double>(in[j]) - mx);
    for (std::size_t j = 0; j < n; ++j) o[j] = static_cast<Scalar>(std::exp(static_cast<double>(in[j]) - mx) / z);
  }
  const auto ix = x.id();
  const auto self = t.size();
  return t.record(std::move(out), x.requires_grad(), [ix, self, n, rows](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(self);
    if (Tensor* gx = tp.grad_buffer(ix)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const Scalar* yr = y.data() + r * n;
        const Scalar* gr = g.data() + r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += static_cast<double>(gr[j]) * yr[j];
        for (std::size_t j = 0; j < n; ++j) (*gx)[r * n + j] += static_cast<Scalar>(yr[j] * (gr[j] - dot));
      }
    }
  });
}

std::vector<std::size_t> argmax_rows(const Tensor& x) {
  check_finite_input("argmax_rows", x);
  const std::size_t n = x.shape().back(), rows = row_count(x);
  std::vector<std::size_t> idx(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Scalar* in = x.data() + r * n;
    // max_element returns the first maximum: ties go to the lowest index.
    idx[r] = static_cast<std::size_t>(std::max_element(in, in + n) - in);
  }
  return idx;
}

Tensor hardmax_rows(const Tensor& x) {
  const auto idx = argmax_rows(x);
  const std::size_t n = x.shape().back();
  Tensor out(x.shape());
  for (std::size_t r = 0; r < idx.size(); ++r) out[r * n + idx[r]] = Scalar(1);
  return out;
}

Var hardmax_rows(Var x) { return x.tape()->constant(x.tape()->detached(hardmax_rows(x.value()))); }

Var rmsnorm(Var x, Var gain, Scalar eps) {
  Tape& t = tape_of(x, gain);
  const Tensor& xv = x.value();
  const std::size_t n = xv.shape().back(), rows = row_count(xv);
  if (gain.value().numel() != n) {
    throw DimensionError("rmsnorm: gain " + shape_str(gain.shape()) + " for rows of width " + std::to_string(n));
  }
  const Tensor& gv = gain.value();
  Tensor out(xv.shape());
  std::vector<Scalar> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Scalar* in = xv.data() + r * n;
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += static_cast<double>(in[j]) * in[j];
    const double iv = 1.0 / std::sqrt(ss / static_cast<double>(n) + eps);
    inv[r] = static_cast<Scalar>(iv);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = static_cast<Scalar>(in[j] * iv * gv[j]);
  }
  const auto ix = x.id(), ig = gain.id();
  return t.record(std::move(out), x.requires_grad() || gain.requires_grad(),
                  [ix, ig, n, rows, inv = std::move(inv)](Tape& tp, const Tensor& g) {
                    const Tensor& xv2 = tp.value(ix);
                    const Tensor& gv2 = tp.value(ig);
                    Tensor* gx = tp.grad_buffer(ix);
                    Tensor* gg = tp.grad_buffer(ig);
                    for (std::size_t r = 0; r < rows; ++r) {
                      const Scalar* xr = xv2.data() + r * n;
                      const Scalar* grr = g.data() + r * n;
                      const double iv = inv[r];
                      if (gg) {
                        for (std::size_t j = 0; j < n; ++j) (*gg)[j] += static_cast<Scalar>(grr[j] * xr[j] * iv);
                      }
                      if (gx) {
                        // y_j = g_j x_j s, s = (mean(x^2)+eps)^-1/2, ds/dx_k = -s^3 x_k / n
                        double dot = 0.0;
                        for (std::size_t j = 0; j < n; ++j) dot += static_cast<double>(grr[j]) * gv2[j] * xr[j];
                        const double c = dot * iv * iv * iv / static_cast<double>(n);
                        for (std::size_t j = 0; j < n; ++j) {
                          (*gx)[r * n + j] += static_cast<Scalar>(grr[j] * gv2[j] * iv - c * xr[j]);
                        }
                      }
                    }
                  });
}

namespace {
constexpr double kTinyProb = 1e-30;
}

Var entropy_rows(Var p) {
  Tape& t = *p.tape();
  const Tensor& pv = p.value();
  const std::size_t n = pv.shape().back(), rows = row_count(pv);
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double h = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double q = pv[r * n + j];
      if (q > 0) h -= q * std::log(q);
    }
    out[r] = static_cast<Scalar>(h);
  }
  const auto ip = p.id();
  return t.record(std::move(out), p.requires_grad(), [ip, n, rows](Tape& tp, const Tensor& g) {
    const Tensor& pv2 = tp.value(ip);
    if (Tensor* gp = tp.grad_buffer(ip)) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) {
          const double q = std::max<double>(pv2[r * n + j], kTinyProb);
          (*gp)[r * n + j] += static_cast<Scalar>(-g[r] * (std::log(q) + 1.0));
        }
      }
    }
  });
}

Var row_sums(Var x) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  const std::size_t n = xv.shape().back(), rows = row_count(xv);
  Shape shape(xv.shape().begin(), xv.shape().end() - 1);
  if (shape.empty()) shape = {1};
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += xv[r * n + j];
    out[r] = static_cast<Scalar>(acc);
  }
  const auto ix = x.id();
  return t.record(std::move(out), x.requires_grad(), [ix, n, rows](Tape& tp, const Tensor& g) {
    if (Tensor* gx = tp.grad_buffer(ix)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) (*gx)[r * n + j] += g[r];
    }
  });
}

Var mean_rows(Var x) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  const std::size_t n = xv.shape().back(), rows = row_count(xv);
  std::vector<double> acc(n, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) acc[j] += xv[r * n + j];
  }
  Tensor out({n});
  for (std::size_t j = 0; j < n; ++j) out[j] = static_cast<Scalar>(acc[j] / static_cast<double>(rows));
  const auto ix = x.id();
  return t.record(std::move(out), x.requires_grad(), [ix, n, rows](Tape& tp, const Tensor& g) {
    if (Tensor* gx = tp.grad_buffer(ix)) {
      const Scalar inv = Scalar(1) / static_cast<Scalar>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) (*gx)[r * n + j] += g[j] * inv;
      }
    }
  });
}

Var conv1d(Var x, Var weight, Var bias, std::size_t stride, std::size_t padding) {
  Tape& t = tape_of(x, weight);
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (stride == 0) throw ConfigError("conv1d stride must be positive");
  if (sx.size() != 3 || sw.size() != 3 || sw[1] != sx[2] || bias.numel() != sw[2]) {
    throw DimensionError("conv1d: input " + shape_str(sx) + ", weight " + shape_str(sw) + ", bias " +
                         shape_str(bias.shape()));
  }
  const std::size_t B = sx[0], L = sx[1], Cin = sx[2], K = sw[0], Cout = sw[2];
  if (L + 2 * padding < K) {
    throw ConfigError("conv1d: length " + std::to_string(L) + " shorter than kernel " + std::to_string(K));
  }
  const std::size_t Lout = (L + 2 * padding - K) / stride + 1;
  const std::size_t KC = K * Cin;
  // im2col: one row per output frame holding its K input frames side by side.
  Tensor cols({B * Lout, KC});
  const Tensor& xv = x.value();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < Lout; ++o) {
      Scalar* row = cols.data() + (b * Lout + o) * KC;
      for (std::size_t k = 0; k < K; ++k) {
        const long src = static_cast<long>(o * stride + k) - static_cast<long>(padding);
        if (src >= 0 && src < static_cast<long>(L)) {
          std::copy_n(xv.data() + (b * L + static_cast<std::size_t>(src)) * Cin, Cin, row + k * Cin);
        }
      }
    }
  }
  Tensor out({B, Lout, Cout});
  detail::gemm(cols.data(), weight.value().data(), out.data(), B * Lout, KC, Cout, false, false, false);
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < B * Lout; ++i) {
    for (std::size_t c = 0; c < Cout; ++c) out[i * Cout + c] += bv[c];
  }
  const auto ix = x.id(), iw = weight.id(), ib = bias.id();
  const bool req = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  return t.record(std::move(out), req,
                  [ix, iw, ib, B, L, Cin, K, Cout, Lout, KC, stride, padding, cols = std::move(cols)](
                      Tape& tp, const Tensor& g) {
                    if (Tensor* gb = tp.grad_buffer(ib)) {
                      for (std::size_t i = 0; i < B * Lout; ++i) {
                        for (std::size_t c = 0; c < Cout; ++c) (*gb)[c] += g[i * Cout + c];
                      }
                    }
                    if (Tensor* gw = tp.grad_buffer(iw)) {
                      detail::gemm(cols.data(), g.data(), gw->data(), KC, B * Lout, Cout, true, false, true);
                    }
                    if (Tensor* gx = tp.grad_buffer(ix)) {
                      Tensor gcols({B * Lout, KC});
                      detail::gemm(g.data(), tp.value(iw).data(), gcols.data(), B * Lout, Cout, KC, false, true,
                                   false);
                      for (std::size_t b = 0; b < B; ++b) {
                        for (std::size_t o = 0; o < Lout; ++o) {
                          const Scalar* row = gcols.data() + (b * Lout + o) * KC;
                          for (std::size_t k = 0; k < K; ++k) {
                            const long src = static_cast<long>(o * stride + k) - static_cast<long>(padding);
                            if (src >= 0 && src < static_cast<long>(L)) {
                              Scalar* dst = gx->data() + (b * L + static_cast<std::size_t>(src)) * Cin;
                              for (std::size_t c = 0; c < Cin; ++c) dst[c] += row[k * Cin + c];
                            }
                          }
                        }
                      }
                    }
                  });
}

Var upsample_nearest(Var x, std::size_t factor) {
  Tape& t = *x.tape();
  const Shape& s = x.shape();
  if (factor == 0) throw ConfigError("upsample factor must be positive");
  if (s.size() != 3) throw DimensionError("upsample_nearest expects [B, L, C], got " + shape_str(s));
  const std::size_t B = s[0], L = s[1], C = s[2];
  Tensor out({B, L * factor, C});
  const Tensor& xv = x.value();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < L * factor; ++i) {
      std::copy_n(xv.data() + (b * L + i / factor) * C, C, out.data() + (b * L * factor + i) * C);
    }
  }
  const auto ix = x.id();
  return t.record(std::move(out), x.requires_grad(), [ix, B, L, C, factor](Tape& tp, const Tensor& g) {
    if (Tensor* gx = tp.grad_buffer(ix)) {
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < L * factor; ++i) {
          const Scalar* src = g.data() + (b * L * factor + i) * C;
          Scalar* dst = gx->data() + (b * L + i / factor) * C;
          for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
        }
      }
    }
  });
}

Var embedding(Var table, const std::vector<long>& indices) {
  Tape& t = *table.tape();
  const Shape& s = table.shape();
  if (s.size() != 2) throw DimensionError("embedding table must be rank 2, got " + shape_str(s));
  const std::size_t V = s[0], D = s[1];
  Tensor out({indices.size(), D});
  const Tensor& tv = table.value();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0) continue;
    if (static_cast<std::size_t>(indices[i]) >= V) {
      throw DimensionError("embedding index " + std::to_string(indices[i]) + " outside table of " + std::to_string(V));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(indices[i]) * D, D, out.data() + i * D);
  }
  const auto it = table.id();
  return t.record(std::move(out), table.requires_grad(), [it, D, indices](Tape& tp, const Tensor& g) {
    if (Tensor* gt = tp.grad_buffer(it)) {
      for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0) continue;
        Scalar* dst = gt->data() + static_cast<std::size_t>(indices[i]) * D;
        for (std::size_t d = 0; d < D; ++d) dst[d] += g[i * D + d];
      }
    }
  });
}

Var embedding_bag_mean(Var table, const std::vector<std::vector<std::size_t>>& bags) {
  Tape& t = *table.tape();
  const Shape& s = table.shape();
  if (s.size() != 2) throw DimensionError("embedding table must be rank 2, got " + shape_str(s));
  const std::size_t V = s[0], D = s[1];
  Tensor out({bags.size(), D});
  const Tensor& tv = table.value();
  for (std::size_t b = 0; b < bags.size(); ++b) {
    if (bags[b].empty()) continue;
    std::vector<double> acc(D, 0.0);
    for (auto idx : bags[b]) {
      if (idx >= V) throw DimensionError("embedding index " + std::to_string(idx) + " outside table of " + std::to_string(V));
      for (std::size_t d = 0; d < D; ++d) acc[d] += tv[idx * D + d];
    }
    for (std::size_t d = 0; d < D; ++d) out[b * D + d] = static_cast<Scalar>(acc[d] / static_cast<double>(bags[b].size()));
  }
  const auto it = table.id();
  return t.record(std::move(out), table.requires_grad(), [it, D, bags](Tape& tp, const Tensor& g) {
    if (Tensor* gt = tp.grad_buffer(it)) {
      for (std::size_t b = 0; b < bags.size(); ++b) {
        if (bags[b].empty()) continue;
        const Scalar w = Scalar(1) / static_cast<Scalar>(bags[b].size());
        for (auto idx : bags[b]) {
          for (std::size_t d = 0; d < D; ++d) (*gt)[idx * D + d] += w * g[b * D + d];
        }
      }
    }
  });
}

Var bce_with_logits(Var logits, const Tensor& targets, const Tensor& weights) {
  Tape& t = *logits.tape();
  const Tensor& x = logits.value();
  if (targets.numel() != x.numel() || weights.numel() != x.numel()) {
    throw DimensionError("bce_with_logits: logits " + shape_str(x.shape()) + ", targets " +
                         shape_str(targets.shape()) + ", weights " + shape_str(weights.shape()));
  }
  check_finite_input("bce_with_logits", x);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (weights[i] == 0) continue;
    const double v = x[i], y = targets[i];
    // max(v,0) - v*y + log(1 + exp(-|v|))
    acc += weights[i] * (std::max(v, 0.0) - v * y + std::log1p(std::exp(-std::abs(v))));
  }
  const auto il = logits.id();
  return t.record(Tensor::scalar(static_cast<Scalar>(acc)), logits.requires_grad(),
                  [il, targets, weights](Tape& tp, const Tensor& g) {
                    const Tensor& xv = tp.value(il);
                    if (Tensor* gl = tp.grad_buffer(il)) {
                      for (std::size_t i = 0; i < xv.numel(); ++i) {
                        if (weights[i] == 0) continue;
                        const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(xv[i])));
                        (*gl)[i] += static_cast<Scalar>(g[0] * weights[i] * (p - targets[i]));
                      }
                    }
                  });
}

Var cross_entropy(Var logits, const std::vector<std::size_t>& targets, const std::vector<Scalar>& weights) {
  Tape& t = *logits.tape();
  const Tensor& x = logits.value();
  const std::size_t n = x.shape().back(), rows = row_count(x);
  if (targets.size() != rows || weights.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(rows) + " rows, " + std::to_string(targets.size()) +
                         " targets, " + std::to_string(weights.size()) + " weights");
  }
  check_finite_input("cross_entropy", x);
  Tensor probs(x.shape());
  double acc = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= n) throw DimensionError("cross_entropy target " + std::to_string(targets[r]) + " >= " + std::to_string(n));
    const Scalar* in = x.data() + r * n;
    const Scalar mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(static_cast<double>(in[j]) - mx);
    for (std::size_t j = 0; j < n; ++j) probs[r * n + j] = static_cast<Scalar>(std::exp(static_cast<double>(in[j]) - mx) / z);
    acc += weights[r] * (std::log(z) + mx - in[targets[r]]);
  }
  const auto il = logits.id();
  return t.record(Tensor::scalar(static_cast<Scalar>(acc)), logits.requires_grad(),
                  [il, n, rows, targets, weights, probs = std::move(probs)](Tape& tp, const Tensor& g) {
                    if (Tensor* gl = tp.grad_buffer(il)) {
                      for (std::size_t r = 0; r < rows; ++r) {
                        if (weights[r] == 0) continue;
                        const Scalar w = g[0] * weights[r];
                        for (std::size_t j = 0; j < n; ++j) {
                          const Scalar y = j == targets[r] ? Scalar(1) : Scalar(0);
                          (*gl)[r * n + j] += w * (probs[r * n + j] - y);
                        }
                      }
                    }
                  });
}

}  // namespace pgr2m::nn
