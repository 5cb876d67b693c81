#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace promptlab {

// Dense row-major array of 64-bit floats. Rank 0 (scalar), 1 (vector) and
// 2 (matrix) are the only ranks the engine uses.
struct DenseArray {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  DenseArray() = default;
  DenseArray(std::vector<std::size_t> s, std::vector<double> v)
      : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != element_count(shape)) {
      throw std::invalid_argument("DenseArray: value count " +
                                  std::to_string(values.size()) +
                                  " does not match shape " + shape_string());
    }
  }

  static std::size_t element_count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  static DenseArray scalar(double v) { return DenseArray({}, {v}); }

  static DenseArray vec(std::vector<double> v) {
    std::size_t n = v.size();
    return DenseArray({n}, std::move(v));
  }

  static DenseArray zeros(std::vector<std::size_t> s) {
    std::size_t n = element_count(s);
    return DenseArray(std::move(s), std::vector<double>(n, 0.0));
  }

  static DenseArray matrix(std::size_t rows, std::size_t cols,
                           std::vector<double> v) {
    return DenseArray({rows, cols}, std::move(v));
  }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  bool is_scalar() const { return shape.empty(); }

  std::size_t rows() const {
    if (rank() != 2) throw std::invalid_argument("rows(): not a matrix");
    return shape[0];
  }
  std::size_t cols() const {
    if (rank() != 2) throw std::invalid_argument("cols(): not a matrix");
    return shape[1];
  }

  double& at(std::size_t i) { return values[i]; }
  double at(std::size_t i) const { return values[i]; }
  double& at(std::size_t i, std::size_t j) { return values[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const {
    return values[i * shape[1] + j];
  }

  bool same_shape(const DenseArray& o) const { return shape == o.shape; }

  std::string shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double dot_product(const std::vector<double>& a,
                          const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace promptlab
