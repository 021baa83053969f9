#pragma once

#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "mata/core/error.hpp"
#include "mata/core/rng.hpp"

namespace mata::core {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

// Dense row-major tensor of doubles. `node` links the tensor to the tape that
// produced it (-1 = constant, not on any tape).
struct Tensor {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  int node = -1;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), values(shape_numel(shape), 0.0) {}
  Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != shape_numel(shape))
      throw DimensionError("tensor: " + std::to_string(values.size()) +
                           " values for shape " + shape_str(shape));
  }

  std::size_t numel() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t i) { return values[i]; }
  double at(std::size_t i) const { return values[i]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

  static Tensor full(Shape s, double v) {
    Tensor t(std::move(s));
    for (auto& x : t.values) x = v;
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor uniform(Shape s, double lo, double hi, Rng& rng) {
    Tensor t(std::move(s));
    for (auto& x : t.values) x = rng.uniform(lo, hi);
    return t;
  }

  static Tensor normal(Shape s, Rng& rng) {
    Tensor t(std::move(s));
    for (auto& x : t.values) x = rng.normal();
    return t;
  }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw DimensionError(std::string(op) + ": shapes differ: " + shape_str(a.shape) +
                         " vs " + shape_str(b.shape));
}

inline void require_rank(const Tensor& a, std::size_t r, const char* op) {
  if (a.rank() != r)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) +
                         ", got " + shape_str(a.shape));
}

}  // namespace mata::core
