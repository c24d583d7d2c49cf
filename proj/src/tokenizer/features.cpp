#include "pgr2m/tokenizer/features.hpp"

#include "pgr2m/error.hpp"

namespace pgr2m::tok {

using motion::kFeatureDim;
using motion::kJoints;
using nn::Scalar;
using nn::Tensor;

namespace {
constexpr double kFps = motion::kFps;
}

CanonicalMotion canonicalize(const motion::Motion& m) {
  const std::size_t L = m.length();
  if (L == 0) throw ValidationError("cannot canonicalize an empty motion");
  CanonicalMotion c;
  c.origin_x = m.frame(0)[0];
  c.origin_z = m.frame(0)[2];
  c.features = Tensor({L, kFeatureDim});
  c.positions = Tensor({L, kFeatureDim});
  for (std::size_t t = 0; t < L; ++t) {
    auto f = m.frame(t);
    Scalar* pos = c.positions.data() + t * kFeatureDim;
    Scalar* feat = c.features.data() + t * kFeatureDim;
    for (std::size_t j = 0; j < kJoints; ++j) {
      pos[3 * j] = static_cast<Scalar>(f[3 * j] - c.origin_x);
      pos[3 * j + 1] = static_cast<Scalar>(f[3 * j + 1]);
      pos[3 * j + 2] = static_cast<Scalar>(f[3 * j + 2] - c.origin_z);
    }
    for (std::size_t j = 1; j < kJoints; ++j) {
      for (std::size_t k = 0; k < 3; ++k) feat[3 * j + k] = static_cast<Scalar>(f[3 * j + k] - f[k]);
    }
    if (t > 0) {
      auto prev = m.frame(t - 1);
      feat[0] = static_cast<Scalar>((f[0] - prev[0]) * kFps);
      feat[2] = static_cast<Scalar>((f[2] - prev[2]) * kFps);
    }
    feat[1] = static_cast<Scalar>(f[1]);
  }
  return c;
}

motion::Motion restore_origin(const Tensor& positions, double origin_x, double origin_z) {
  if (positions.rank() != 2 || positions.dim(1) != kFeatureDim) {
    throw DimensionError("positions must be [L, 48], got " + nn::shape_str(positions.shape()));
  }
  motion::Motion m;
  m.frames.resize(positions.numel());
  for (std::size_t t = 0; t < positions.dim(0); ++t) {
    for (std::size_t j = 0; j < kJoints; ++j) {
      const std::size_t i = t * kFeatureDim + 3 * j;
      m.frames[i] = static_cast<double>(positions[i]) + origin_x;
      m.frames[i + 1] = static_cast<double>(positions[i + 1]);
      m.frames[i + 2] = static_cast<double>(positions[i + 2]) + origin_z;
    }
    // A decoded root below the floor lifts its whole frame onto the floor.
    const double lift = -m.frames[t * kFeatureDim + 3 * motion::kRoot + 1];
    if (lift > 0.0) {
      for (std::size_t j = 0; j < kJoints; ++j) m.frames[t * kFeatureDim + 3 * j + 1] += lift;
    }
  }
  return m;
}

nn::Var integrate_root(nn::Var features) {
  const nn::Shape& s = features.shape();
  if (s.size() != 3 || s[2] != kFeatureDim) {
    throw DimensionError("integrate_root expects [B, L, 48], got " + nn::shape_str(s));
  }
  const std::size_t B = s[0], L = s[1];
  const Tensor& f = features.value();
  Tensor out(s);
  for (std::size_t b = 0; b < B; ++b) {
    double x = 0.0, z = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
      const Scalar* in = f.data() + (b * L + t) * kFeatureDim;
      Scalar* o = out.data() + (b * L + t) * kFeatureDim;
      if (t > 0) {
        x += in[0] / kFps;
        z += in[2] / kFps;
      }
      const double y = in[1];
      o[0] = static_cast<Scalar>(x);
      o[1] = static_cast<Scalar>(y);
      o[2] = static_cast<Scalar>(z);
      for (std::size_t j = 1; j < kJoints; ++j) {
        o[3 * j] = static_cast<Scalar>(in[3 * j] + x);
        o[3 * j + 1] = static_cast<Scalar>(in[3 * j + 1] + y);
        o[3 * j + 2] = static_cast<Scalar>(in[3 * j + 2] + z);
      }
    }
  }
  const auto id = features.id();
  return features.tape()->record(std::move(out), features.requires_grad(), [id, B, L](nn::Tape& tp, const Tensor& g) {
    Tensor* gf = tp.grad_buffer(id);
    if (!gf) return;
    for (std::size_t b = 0; b < B; ++b) {
      double gx = 0.0, gz = 0.0;  // reverse cumulative sums of root gradients
      for (std::size_t t = L; t-- > 0;) {
        const Scalar* go = g.data() + (b * L + t) * kFeatureDim;
        Scalar* gi = gf->data() + (b * L + t) * kFeatureDim;
        double rx = go[0], ry = go[1], rz = go[2];
        for (std::size_t j = 1; j < kJoints; ++j) {
          gi[3 * j] += go[3 * j];
          gi[3 * j + 1] += go[3 * j + 1];
          gi[3 * j + 2] += go[3 * j + 2];
          rx += go[3 * j];
          ry += go[3 * j + 1];
          rz += go[3 * j + 2];
        }
        gx += rx;
        gz += rz;
        gi[1] += static_cast<Scalar>(ry);
        if (t > 0) {
          gi[0] += static_cast<Scalar>(gx / kFps);
          gi[2] += static_cast<Scalar>(gz / kFps);
        }
      }
    }
  });
}

namespace {

void check_positions(const nn::Shape& s, const char* what) {
  if (s.empty() || s.back() != kFeatureDim) {
    throw DimensionError(std::string(what) + " expects [..., 48], got " + nn::shape_str(s));
  }
}

}  // namespace

Tensor joint_space(const Tensor& positions) {
  check_positions(positions.shape(), "joint_space");
  Tensor out = positions;
  for (std::size_t r = 0; r < out.numel() / kFeatureDim; ++r) {
    Scalar* o = out.data() + r * kFeatureDim;
    for (std::size_t j = 1; j < kJoints; ++j)
      for (std::size_t a = 0; a < 3; ++a) o[3 * j + a] -= o[a];
  }
  return out;
}

nn::Var joint_space(nn::Var positions) {
  Tensor out = joint_space(positions.value());
  const auto id = positions.id();
  const std::size_t rows = out.numel() / kFeatureDim;
  return positions.tape()->record(std::move(out), positions.requires_grad(), [id, rows](nn::Tape& tp, const Tensor& g) {
    Tensor* gp = tp.grad_buffer(id);
    if (!gp) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const Scalar* go = g.data() + r * kFeatureDim;
      Scalar* gi = gp->data() + r * kFeatureDim;
      for (std::size_t a = 0; a < 3; ++a) {
        double root = go[a];
        for (std::size_t j = 1; j < kJoints; ++j) {
          gi[3 * j + a] += go[3 * j + a];
          root -= go[3 * j + a];
        }
        gi[a] += static_cast<Scalar>(root);
      }
    }
  });
}

}  // namespace pgr2m::tok
