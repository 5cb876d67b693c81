#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "promptlab/tape.hpp"

namespace promptlab {

// Builds the scalar under test on a fresh tape from leaves holding the
// given points. Called repeatedly by the finite-difference oracle, so it
// must be deterministic.
using GraphFn = std::function<Var(Tape&, std::span<const Var>)>;

namespace detail {
inline double eval_scalar(const GraphFn& fn, std::span<const DenseArray> pts) {
  Tape t;
  std::vector<Var> leaves;
  leaves.reserve(pts.size());
  for (const DenseArray& p : pts) leaves.push_back(t.leaf(p));
  Var y = fn(t, leaves);
  const DenseArray& v = y.value();
  if (!v.is_scalar()) {
    throw std::invalid_argument("grad_check: function output must be scalar");
  }
  return v.values[0];
}
}  // namespace detail

// Central-difference check of the reverse-mode gradients against the
// forward evaluation only. Returns
//   max_i |analytic_i - central_i| / max(1, |analytic_i|).
inline double grad_check(const GraphFn& fn, std::span<const DenseArray> points,
                         double h) {
  if (h <= 0.0) throw std::invalid_argument("grad_check: h must be positive");

  Tape t;
  std::vector<Var> leaves;
  leaves.reserve(points.size());
  for (const DenseArray& p : points) leaves.push_back(t.leaf(p));
  Var y = fn(t, leaves);
  if (!y.value().is_scalar()) {
    throw std::invalid_argument("grad_check: function output must be scalar");
  }
  t.backward(y);

  std::vector<DenseArray> pts(points.begin(), points.end());
  double max_rel = 0.0;
  for (std::size_t l = 0; l < pts.size(); ++l) {
    const DenseArray& g = leaves[l].grad();
    for (std::size_t i = 0; i < pts[l].size(); ++i) {
      double orig = pts[l].values[i];
      pts[l].values[i] = orig + h;
      double fp = detail::eval_scalar(fn, pts);
      pts[l].values[i] = orig - h;
      double fm = detail::eval_scalar(fn, pts);
      pts[l].values[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw std::domain_error("grad_check: non-finite evaluation");
      }
      double fd = (fp - fm) / (2.0 * h);
      double a = g.values[i];
      double rel = std::abs(a - fd) / std::max(1.0, std::abs(a));
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

// Single-leaf convenience form.
inline double grad_check(const std::function<Var(Tape&, Var)>& fn,
                         const DenseArray& point, double h) {
  GraphFn wrap = [&fn](Tape& t, std::span<const Var> xs) {
    return fn(t, xs[0]);
  };
  return grad_check(wrap, std::span<const DenseArray>(&point, 1), h);
}

}  // namespace promptlab
