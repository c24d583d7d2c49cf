#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace pgr2m::nn {

// Storage precision. The f64 build of the library exists for gradient checks.
#ifdef PGR2M_DOUBLE
using Scalar = double;
#else
using Scalar = float;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major value buffer. Plain value type: copying copies the data.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = Scalar(0));
  Tensor(Shape shape, std::vector<Scalar> values);

  static Tensor scalar(Scalar v) { return Tensor({1}, {v}); }
  static Tensor matrix(std::initializer_list<std::initializer_list<Scalar>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  Scalar* data() noexcept { return values_.data(); }
  const Scalar* data() const noexcept { return values_.data(); }
  std::span<Scalar> values() noexcept { return values_; }
  std::span<const Scalar> values() const noexcept { return values_; }

  Scalar& operator[](std::size_t i) { return values_[i]; }
  Scalar operator[](std::size_t i) const { return values_[i]; }

  // 2D access; shape must be rank 2.
  Scalar& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
  Scalar at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }

  Scalar item() const;
  void fill(Scalar v);
  // Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<Scalar> values_;
};

}  // namespace pgr2m::nn
