#include "promptlab/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace promptlab {

const DenseArray& Var::value() const { return tape_->node(id_).value; }
const DenseArray& Var::grad() const { return tape_->node(id_).grad; }

Var Tape::push(DenseArray value, const char* op,
               std::function<void(Tape&)> back) {
  if (!value.all_finite()) {
    throw std::domain_error(std::string(op) + ": non-finite output");
  }
  Node n;
  n.grad = DenseArray::zeros(value.shape);
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_same_tape(Var v, const char* op) const {
  if (v.tape_ != this) {
    throw std::invalid_argument(std::string(op) +
                                ": operand belongs to a different tape");
  }
}

Var Tape::leaf(DenseArray v) { return push(std::move(v), "leaf", {}); }
Var Tape::constant(DenseArray v) { return push(std::move(v), "constant", {}); }

Var Tape::affine(const DenseArray& w, const DenseArray& b, Var x) {
  check_same_tape(x, "affine");
  const DenseArray& xv = node(x.id_).value;
  if (w.rank() != 2) throw std::invalid_argument("affine: W must be a matrix");
  if (xv.rank() != 1) throw std::invalid_argument("affine: x must be a vector");
  std::size_t out = w.rows(), in = w.cols();
  if (in != xv.size()) {
    throw std::invalid_argument("affine: W columns (" + std::to_string(in) +
                                ") != x length (" + std::to_string(xv.size()) +
                                ")");
  }
  if (b.size() != 0 && b.size() != out) {
    throw std::invalid_argument("affine: bias length " +
                                std::to_string(b.size()) + " != output " +
                                std::to_string(out));
  }
  std::vector<double> y(out, 0.0);
  for (std::size_t i = 0; i < out; ++i) {
    double s = b.size() ? b.at(i) : 0.0;
    const double* wrow = &w.values[i * in];
    for (std::size_t j = 0; j < in; ++j) s += wrow[j] * xv.values[j];
    y[i] = s;
  }
  std::size_t xid = x.id_;
  const DenseArray* wp = &w;
  Var r = push(DenseArray::vec(std::move(y)), "affine", {});
  std::size_t self = r.id_;
  nodes_[self].back = [xid, self, wp, out, in](Tape& t) {
    // gx += W^T g
    const auto& g = t.nodes_[self].grad.values;
    auto& gx = t.nodes_[xid].grad.values;
    for (std::size_t i = 0; i < out; ++i) {
      const double* wrow = &wp->values[i * in];
      double gi = g[i];
      for (std::size_t j = 0; j < in; ++j) gx[j] += gi * wrow[j];
    }
  };
  return r;
}

Var Tape::tanh(Var x) {
  check_same_tape(x, "tanh");
  const DenseArray& xv = node(x.id_).value;
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = std::tanh(xv.values[i]);
  std::size_t xid = x.id_;
  DenseArray out(xv.shape, std::move(y));
  Var r = push(std::move(out), "tanh", {});
  std::size_t self = r.id_;
  nodes_[self].back = [xid, self](Tape& t) {
    const auto& g = t.nodes_[self].grad.values;
    const auto& y = t.nodes_[self].value.values;
    auto& gx = t.nodes_[xid].grad.values;
    for (std::size_t i = 0; i < g.size(); ++i)
      gx[i] += g[i] * (1.0 - y[i] * y[i]);
  };
  return r;
}

Var Tape::add(Var a, Var b) {
  check_same_tape(a, "add");
  check_same_tape(b, "add");
  const DenseArray& av = node(a.id_).value;
  const DenseArray& bv = node(b.id_).value;
  if (!av.same_shape(bv)) {
    throw std::invalid_argument("add: shape mismatch " + av.shape_string() +
                                " vs " + bv.shape_string());
  }
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = av.values[i] + bv.values[i];
  std::size_t aid = a.id_, bid = b.id_;
  Var r = push(DenseArray(av.shape, std::move(y)), "add", {});
  std::size_t self = r.id_;
  nodes_[self].back = [aid, bid, self](Tape& t) {
    const auto& g = t.nodes_[self].grad.values;
    auto& ga = t.nodes_[aid].grad.values;
    auto& gb = t.nodes_[bid].grad.values;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  };
  return r;
}

Var Tape::sub(Var a, Var b) {
  check_same_tape(a, "sub");
  check_same_tape(b, "sub");
  const DenseArray& av = node(a.id_).value;
  const DenseArray& bv = node(b.id_).value;
  if (!av.same_shape(bv)) {
    throw std::invalid_argument("sub: shape mismatch " + av.shape_string() +
                                " vs " + bv.shape_string());
  }
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = av.values[i] - bv.values[i];
  std::size_t aid = a.id_, bid = b.id_;
  Var r = push(DenseArray(av.shape, std::move(y)), "sub", {});
  std::size_t self = r.id_;
  nodes_[self].back = [aid, bid, self](Tape& t) {
    const auto& g = t.nodes_[self].grad.values;
    auto& ga = t.nodes_[aid].grad.values;
    auto& gb = t.nodes_[bid].grad.values;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  };
  return r;
}

Var Tape::scale(Var a, double s) {
  check_same_tape(a, "scale");
  const DenseArray& av = node(a.id_).value;
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = s * av.values[i];
  std::size_t aid = a.id_;
  Var r = push(DenseArray(av.shape, std::move(y)), "scale", {});
  std::size_t self = r.id_;
  nodes_[self].back = [aid, self, s](Tape& t) {
    const auto& g = t.nodes_[self].grad.values;
    auto& ga = t.nodes_[aid].grad.values;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  };
  return r;
}

Var Tape::add_scalar(Var a, double s) {
  check_same_tape(a, "add_scalar");
  const DenseArray& av = node(a.id_).value;
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av.values[i] + s;
  std::size_t aid = a.id_;
  Var r = push(DenseArray(av.shape, std::move(y)), "add_scalar", {});
  std::size_t self = r.id_;
  nodes_[self].back = [aid, self](Tape& t) {
    const auto& g = t.nodes_[self].grad.values;
    auto& ga = t.nodes_[aid].grad.values;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return r;
}

Var Tape::concat_rows(std::span<const Var> rows) {
  if (rows.empty()) throw std::invalid_argument("concat_rows: empty input");
  std::size_t width = 0;
  std::size_t total = 0;
  for (Var v : rows) {
    check_same_tape(v, "concat_rows");
    const DenseArray& b = node(v.id_).value;
    std::size_t w = b.rank() == 1 ? b.size() : b.cols();
    std::size_t r = b.rank() == 1 ? 1 : b.rows();
    if (b.rank() > 2) {
      throw std::invalid_argument("concat_rows: operand rank > 2");
    }
    if (width == 0) width = w;
    if (w != width) {
      throw std::invalid_argument("concat_rows: width mismatch " +
                                  std::to_string(w) + " vs " +
                                  std::to_string(width));
    }
    total += r;
  }
  std::vector<double> y;
  y.reserve(total * width);
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // (id, count)
  for (Var v : rows) {
    const DenseArray& b = node(v.id_).value;
    y.insert(y.end(), b.values.begin(), b.values.end());
    spans.emplace_back(v.id_, b.size());
  }
  Var r = push(DenseArray::matrix(total, width, std::move(y)), "concat_rows",
               {});
  std::size_t self = r.id_;
  nodes_[self].back = [spans, self](Tape& t) {
    const auto& g = t.nodes_[self].grad.values;
    std::size_t off = 0;
    for (auto [id, count] : spans) {
      auto& gp = t.nodes_[id].grad.values;
      for (std::size_t i = 0; i < count; ++i) gp[i] += g[off + i];
      off += count;
    }
  };
  return r;
}

Var Tape::mean_rows(Var m) {
  check_same_tape(m, "mean_rows");
  const DenseArray& mv = node(m.id_).value;
  if (mv.rank() != 2) {
    throw std::invalid_argument("mean_rows: operand must be a matrix, got " +
                                mv.shape_string());
  }
  std::size_t r = mv.rows(), c = mv.cols();
  std::vector<double> y(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j] += mv.at(i, j);
  for (std::size_t j = 0; j < c; ++j) y[j] /= static_cast<double>(r);
  std::size_t mid = m.id_;
  Var out = push(DenseArray::vec(std::move(y)), "mean_rows", {});
  std::size_t self = out.id_;
  nodes_[self].back = [mid, self, r, c](Tape& t) {
    const auto& g = t.nodes_[self].grad.values;
    auto& gm = t.nodes_[mid].grad.values;
    double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gm[i * c + j] += g[j] * inv;
  };
  return out;
}

Var Tape::l2_normalize(Var v) {
  check_same_tape(v, "l2_normalize");
  const DenseArray& xv = node(v.id_).value;
  if (xv.rank() != 1) {
    throw std::invalid_argument("l2_normalize: operand must be a vector");
  }
  double norm = l2_norm(xv.values);
  if (norm == 0.0) {
    throw std::domain_error("l2_normalize: zero vector");
  }
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv.values[i] / norm;
  std::size_t xid = v.id_;
  Var r = push(DenseArray::vec(std::move(y)), "l2_normalize", {});
  std::size_t self = r.id_;
  nodes_[self].back = [xid, self, norm](Tape& t) {
    // d(x/|x|)/dx = (I - y y^T) / |x|
    const auto& g = t.nodes_[self].grad.values;
    const auto& y = t.nodes_[self].value.values;
    auto& gx = t.nodes_[xid].grad.values;
    double gy = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
    for (std::size_t i = 0; i < g.size(); ++i)
      gx[i] += (g[i] - y[i] * gy) / norm;
  };
  return r;
}

Var Tape::dot(Var a, Var b) {
  check_same_tape(a, "dot");
  check_same_tape(b, "dot");
  const DenseArray& av = node(a.id_).value;
  const DenseArray& bv = node(b.id_).value;
  if (av.rank() != 1 || bv.rank() != 1 || av.size() != bv.size()) {
    throw std::invalid_argument("dot: shape mismatch " + av.shape_string() +
                                " vs " + bv.shape_string());
  }
  double s = dot_product(av.values, bv.values);
  std::size_t aid = a.id_, bid = b.id_;
  Var r = push(DenseArray::scalar(s), "dot", {});
  std::size_t self = r.id_;
  nodes_[self].back = [aid, bid, self](Tape& t) {
    double g = t.nodes_[self].grad.values[0];
    const auto& av = t.nodes_[aid].value.values;
    const auto& bv = t.nodes_[bid].value.values;
    auto& ga = t.nodes_[aid].grad.values;
    auto& gb = t.nodes_[bid].grad.values;
    for (std::size_t i = 0; i < av.size(); ++i) {
      ga[i] += g * bv[i];
      gb[i] += g * av[i];
    }
  };
  return r;
}

Var Tape::sum(Var v) {
  check_same_tape(v, "sum");
  const DenseArray& xv = node(v.id_).value;
  double s = 0.0;
  for (double x : xv.values) s += x;
  std::size_t xid = v.id_;
  Var r = push(DenseArray::scalar(s), "sum", {});
  std::size_t self = r.id_;
  nodes_[self].back = [xid, self](Tape& t) {
    double g = t.nodes_[self].grad.values[0];
    auto& gx = t.nodes_[xid].grad.values;
    for (double& gi : gx) gi += g;
  };
  return r;
}

namespace {
// log-softmax with max subtraction; returns log p.
std::vector<double> stable_log_softmax(const std::vector<double>& z) {
  double m = *std::max_element(z.begin(), z.end());
  double lse = 0.0;
  for (double v : z) lse += std::exp(v - m);
  lse = m + std::log(lse);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  return out;
}
}  // namespace

Var Tape::softmax(Var logits) {
  check_same_tape(logits, "softmax");
  const DenseArray& zv = node(logits.id_).value;
  if (zv.rank() != 1 || zv.size() == 0) {
    throw std::invalid_argument("softmax: operand must be a non-empty vector");
  }
  auto lp = stable_log_softmax(zv.values);
  std::vector<double> p(lp.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(lp[i]);
  std::size_t zid = logits.id_;
  Var r = push(DenseArray::vec(std::move(p)), "softmax", {});
  std::size_t self = r.id_;
  nodes_[self].back = [zid, self](Tape& t) {
    // dp/dz = diag(p) - p p^T  =>  gz += p .* (g - <g, p>)
    const auto& g = t.nodes_[self].grad.values;
    const auto& p = t.nodes_[self].value.values;
    auto& gz = t.nodes_[zid].grad.values;
    double gp = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) gp += g[i] * p[i];
    for (std::size_t i = 0; i < g.size(); ++i) gz[i] += p[i] * (g[i] - gp);
  };
  return r;
}

Var Tape::log_softmax(Var logits) {
  check_same_tape(logits, "log_softmax");
  const DenseArray& zv = node(logits.id_).value;
  if (zv.rank() != 1 || zv.size() == 0) {
    throw std::invalid_argument(
        "log_softmax: operand must be a non-empty vector");
  }
  auto lp = stable_log_softmax(zv.values);
  std::size_t zid = logits.id_;
  Var r = push(DenseArray::vec(std::move(lp)), "log_softmax", {});
  std::size_t self = r.id_;
  nodes_[self].back = [zid, self](Tape& t) {
    // gz += g - softmax(z) * sum(g)
    const auto& g = t.nodes_[self].grad.values;
    const auto& lp = t.nodes_[self].value.values;
    auto& gz = t.nodes_[zid].grad.values;
    double gs = 0.0;
    for (double gi : g) gs += gi;
    for (std::size_t i = 0; i < g.size(); ++i)
      gz[i] += g[i] - std::exp(lp[i]) * gs;
  };
  return r;
}

Var Tape::pick(Var v, std::size_t index) {
  check_same_tape(v, "pick");
  const DenseArray& xv = node(v.id_).value;
  if (xv.rank() != 1 || index >= xv.size()) {
    throw std::invalid_argument("pick: index " + std::to_string(index) +
                                " out of range for " + xv.shape_string());
  }
  std::size_t xid = v.id_;
  Var r = push(DenseArray::scalar(xv.values[index]), "pick", {});
  std::size_t self = r.id_;
  nodes_[self].back = [xid, self, index](Tape& t) {
    t.nodes_[xid].grad.values[index] += t.nodes_[self].grad.values[0];
  };
  return r;
}

Var Tape::stack_scalars(std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("stack_scalars: empty input");
  std::vector<double> y;
  std::vector<std::size_t> ids;
  y.reserve(xs.size());
  ids.reserve(xs.size());
  for (Var v : xs) {
    check_same_tape(v, "stack_scalars");
    const DenseArray& b = node(v.id_).value;
    if (!b.is_scalar()) {
      throw std::invalid_argument("stack_scalars: operand is not scalar, got " +
                                  b.shape_string());
    }
    y.push_back(b.values[0]);
    ids.push_back(v.id_);
  }
  Var r = push(DenseArray::vec(std::move(y)), "stack_scalars", {});
  std::size_t self = r.id_;
  nodes_[self].back = [ids, self](Tape& t) {
    const auto& g = t.nodes_[self].grad.values;
    for (std::size_t i = 0; i < ids.size(); ++i)
      t.nodes_[ids[i]].grad.values[0] += g[i];
  };
  return r;
}

Var Tape::kl_from_logits(Var p_logits, Var q_logits) {
  check_same_tape(p_logits, "kl_from_logits");
  check_same_tape(q_logits, "kl_from_logits");
  const DenseArray& av = node(p_logits.id_).value;
  const DenseArray& bv = node(q_logits.id_).value;
  if (av.rank() != 1 || bv.rank() != 1 || av.size() != bv.size()) {
    throw std::invalid_argument("kl_from_logits: shape mismatch " +
                                av.shape_string() + " vs " +
                                bv.shape_string());
  }
  auto la = stable_log_softmax(av.values);
  auto lb = stable_log_softmax(bv.values);
  double kl = 0.0;
  for (std::size_t i = 0; i < la.size(); ++i) {
    double p = std::exp(la[i]);
    if (p > 0.0) kl += p * (la[i] - lb[i]);  // 0*log 0 = 0
  }
  std::size_t aid = p_logits.id_, bid = q_logits.id_;
  Var r = push(DenseArray::scalar(kl), "kl_from_logits", {});
  std::size_t self = r.id_;
  nodes_[self].back = [aid, bid, self](Tape& t) {
    // dKL/da_k = p_k ((log p_k - log q_k) - KL); dKL/db_k = q_k - p_k
    double g = t.nodes_[self].grad.values[0];
    double kl = t.nodes_[self].value.values[0];
    auto la = stable_log_softmax(t.nodes_[aid].value.values);
    auto lb = stable_log_softmax(t.nodes_[bid].value.values);
    auto& ga = t.nodes_[aid].grad.values;
    auto& gb = t.nodes_[bid].grad.values;
    for (std::size_t i = 0; i < la.size(); ++i) {
      double p = std::exp(la[i]);
      double q = std::exp(lb[i]);
      ga[i] += g * p * ((la[i] - lb[i]) - kl);
      gb[i] += g * (q - p);
    }
  };
  return r;
}

Var Tape::weighted_sum(Var x, const DenseArray& weights) {
  check_same_tape(x, "weighted_sum");
  const DenseArray& xv = node(x.id_).value;
  if (!xv.same_shape(weights)) {
    throw std::invalid_argument("weighted_sum: shape mismatch " +
                                xv.shape_string() + " vs " +
                                weights.shape_string());
  }
  double s = dot_product(xv.values, weights.values);
  std::size_t xid = x.id_;
  const DenseArray* wp = &weights;
  Var r = push(DenseArray::scalar(s), "weighted_sum", {});
  std::size_t self = r.id_;
  nodes_[self].back = [xid, self, wp](Tape& t) {
    double g = t.nodes_[self].grad.values[0];
    auto& gx = t.nodes_[xid].grad.values;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * wp->values[i];
  };
  return r;
}

void Tape::backward(Var output) {
  check_same_tape(output, "backward");
  const DenseArray& out = node(output.id_).value;
  if (!out.is_scalar()) {
    throw std::invalid_argument("backward: output must be scalar, got " +
                                out.shape_string());
  }
  nodes_[output.id_].grad.values[0] += 1.0;
  for (std::size_t i = output.id_ + 1; i-- > 0;) {
    if (nodes_[i].back) nodes_[i].back(*this);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) {
    std::fill(n.grad.values.begin(), n.grad.values.end(), 0.0);
  }
}

}  // namespace promptlab
