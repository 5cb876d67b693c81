#include "promptlab/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace promptlab {

Marginals Marginals::uniform(std::size_t m, std::size_t n) {
  if (m == 0 || n == 0) {
    throw std::invalid_argument("Marginals: empty side");
  }
  Marginals out;
  out.a.assign(m, 1.0 / static_cast<double>(m));
  out.b.assign(n, 1.0 / static_cast<double>(n));
  return out;
}

void Marginals::validate() const {
  auto check = [](const std::vector<double>& v, const char* side) {
    if (v.empty()) {
      throw std::invalid_argument(std::string("Marginals: empty ") + side);
    }
    double s = 0.0;
    for (double x : v) {
      if (x < 0.0) {
        throw std::invalid_argument(std::string("Marginals: negative ") + side);
      }
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) {
      throw std::invalid_argument(std::string("Marginals: ") + side +
                                  " does not sum to 1");
    }
  };
  check(a, "row weights");
  check(b, "column weights");
}

DenseArray cost_matrix_values(std::span<const FeatureVector> tun,
                              std::span<const FeatureVector> hand) {
  if (tun.empty() || hand.empty()) {
    throw std::invalid_argument("cost_matrix: empty feature set");
  }
  std::size_t m = tun.size(), n = hand.size();
  std::vector<double> c(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * n + j] = 1.0 - tun[i].cosine(hand[j]);
    }
  }
  return DenseArray::matrix(m, n, std::move(c));
}

Var cost_matrix(Tape& tape, std::span<const Var> tun,
                std::span<const FeatureVector> hand) {
  if (tun.empty() || hand.empty()) {
    throw std::invalid_argument("cost_matrix: empty feature set");
  }
  std::vector<Var> hand_consts;
  hand_consts.reserve(hand.size());
  for (const FeatureVector& h : hand) {
    hand_consts.push_back(tape.constant(DenseArray::vec(h.v)));
  }
  std::vector<Var> rows;
  rows.reserve(tun.size());
  for (Var t : tun) {
    std::vector<Var> entries;
    entries.reserve(hand.size());
    for (Var h : hand_consts) {
      // c = 1 - <t, h>
      entries.push_back(tape.add_scalar(tape.scale(tape.dot(t, h), -1.0), 1.0));
    }
    rows.push_back(tape.stack_scalars(entries));
  }
  return tape.concat_rows(rows);
}

namespace {
double logsumexp(const std::vector<double>& z) {
  double m = *std::max_element(z.begin(), z.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}
}  // namespace

SinkhornResult sinkhorn(const DenseArray& cost, const Marginals& m,
                        const SinkhornOptions& opt) {
  if (cost.rank() != 2) {
    throw std::invalid_argument("sinkhorn: cost must be a matrix");
  }
  std::size_t rows = cost.rows(), cols = cost.cols();
  if (m.a.size() != rows || m.b.size() != cols) {
    throw std::invalid_argument("sinkhorn: marginal sizes " +
                                std::to_string(m.a.size()) + "x" +
                                std::to_string(m.b.size()) +
                                " do not match cost " + cost.shape_string());
  }
  m.validate();
  if (opt.eta <= 0.0) throw std::invalid_argument("sinkhorn: eta must be > 0");
  if (opt.tol <= 0.0) throw std::invalid_argument("sinkhorn: tol must be > 0");

  SinkhornResult res;

  // A single row (or column) is forced by the opposite marginal; return the
  // closed form, exact and independent of eta.
  if (rows == 1 || cols == 1) {
    std::vector<double> plan(rows * cols);
    if (rows == 1) {
      for (std::size_t j = 0; j < cols; ++j) plan[j] = m.b[j];
    } else {
      for (std::size_t i = 0; i < rows; ++i) plan[i] = m.a[i];
    }
    res.plan = DenseArray::matrix(rows, cols, std::move(plan));
    res.converged = true;
    res.iterations = 0;
    res.marginal_error = 0.0;
    return res;
  }

  // Log-domain potentials: plan_ij = exp((f_i + g_j - c_ij) / eta).
  std::vector<double> f(rows, 0.0), g(cols, 0.0);
  std::vector<double> log_a(rows), log_b(cols);
  for (std::size_t i = 0; i < rows; ++i) {
    log_a[i] = m.a[i] > 0.0 ? std::log(m.a[i])
                            : -std::numeric_limits<double>::infinity();
  }
  for (std::size_t j = 0; j < cols; ++j) {
    log_b[j] = m.b[j] > 0.0 ? std::log(m.b[j])
                            : -std::numeric_limits<double>::infinity();
  }

  auto plan_at = [&](std::size_t i, std::size_t j) {
    return std::exp((f[i] + g[j] - cost.at(i, j)) / opt.eta);
  };
  auto marginal_error = [&]() {
    double err = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += plan_at(i, j);
      err = std::max(err, std::abs(s - m.a[i]));
    }
    for (std::size_t j = 0; j < cols; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < rows; ++i) s += plan_at(i, j);
      err = std::max(err, std::abs(s - m.b[j]));
    }
    return err;
  };

  std::vector<double> scratch(std::max(rows, cols));
  std::size_t it = 0;
  double err = std::numeric_limits<double>::infinity();
  for (; it < opt.max_iter; ++it) {
    for (std::size_t i = 0; i < rows; ++i) {
      scratch.resize(cols);
      for (std::size_t j = 0; j < cols; ++j) {
        scratch[j] = (g[j] - cost.at(i, j)) / opt.eta;
      }
      f[i] = opt.eta * (log_a[i] - logsumexp(scratch));
    }
    for (std::size_t j = 0; j < cols; ++j) {
      scratch.resize(rows);
      for (std::size_t i = 0; i < rows; ++i) {
        scratch[i] = (f[i] - cost.at(i, j)) / opt.eta;
      }
      g[j] = opt.eta * (log_b[j] - logsumexp(scratch));
    }
    err = marginal_error();
    if (err < opt.tol) {
      ++it;
      break;
    }
  }

  std::vector<double> plan(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) plan[i * cols + j] = plan_at(i, j);
  }
  res.plan = DenseArray::matrix(rows, cols, std::move(plan));
  res.converged = err < opt.tol;
  res.iterations = it;
  res.marginal_error = err;
  return res;
}

double ot_distance_value(const DenseArray& cost, const DenseArray& plan) {
  if (!cost.same_shape(plan)) {
    throw std::invalid_argument("ot_distance: cost " + cost.shape_string() +
                                " vs plan " + plan.shape_string());
  }
  return dot_product(cost.values, plan.values);
}

Var ot_distance(Tape& tape, Var cost, const DenseArray& plan) {
  return tape.weighted_sum(cost, plan);
}

double exact_ot_bruteforce(const DenseArray& cost) {
  if (cost.rank() != 2 || cost.rows() != cost.cols()) {
    throw std::invalid_argument("exact_ot_bruteforce: cost must be square");
  }
  std::size_t n = cost.rows();
  if (n == 0 || n > 6) {
    throw std::invalid_argument(
        "exact_ot_bruteforce: size must be in [1, 6], got " +
        std::to_string(n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cost.at(i, perm[i]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);
}

Var textual_regularizer(Tape& tape, std::span<const Var> tuning_features,
                        std::span<const std::vector<FeatureVector>* const> hand_sets,
                        const SinkhornOptions& opt) {
  if (tuning_features.empty() || tuning_features.size() != hand_sets.size()) {
    throw std::invalid_argument("textual_regularizer: class set mismatch");
  }
  Var acc;
  for (std::size_t k = 0; k < tuning_features.size(); ++k) {
    const std::vector<FeatureVector>& hand = *hand_sets[k];
    Var trow = tuning_features[k];
    Var row = cost_matrix(tape, std::span<const Var>(&trow, 1), hand);
    Marginals m = Marginals::uniform(1, hand.size());
    SinkhornResult sr = sinkhorn(row.value(), m, opt);
    Var dis = ot_distance(tape, row, sr.plan);
    acc = k == 0 ? dis : tape.add(acc, dis);
  }
  return tape.scale(acc, 1.0 / static_cast<double>(tuning_features.size()));
}

Var textual_regularizer(Tape& tape, Var context,
                        std::span<const Var> text_deep,
                        std::span<const ClassEmbedding> classes,
                        HandcraftedCache& cache, const EncoderWeights& text_w,
                        const SinkhornOptions& opt) {
  if (classes.empty()) {
    throw std::invalid_argument("textual_regularizer: empty class set");
  }
  std::vector<Var> tun;
  std::vector<const std::vector<FeatureVector>*> hand;
  tun.reserve(classes.size());
  hand.reserve(classes.size());
  for (const ClassEmbedding& cls : classes) {
    tun.push_back(encode_text(tape, context, cls.embedding, text_deep, text_w));
    hand.push_back(&cache.features(cls));
  }
  return textual_regularizer(tape, tun, hand, opt);
}

}  // namespace promptlab
