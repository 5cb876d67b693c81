#include "promptlab/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace promptlab {

void AttackConfig::validate() const {
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("AttackConfig: epsilon must be > 0");
  }
  if (!(mu > 0.0)) throw std::invalid_argument("AttackConfig: mu must be > 0");
  if (steps < 1) throw std::invalid_argument("AttackConfig: steps must be >= 1");
  if (!(p == kLinf || p == 2.0)) {
    throw std::invalid_argument("AttackConfig: norm order must be inf or 2");
  }
}

std::vector<double> update_direction(std::span<const double> grad, double p,
                                     double epsilon) {
  if (!(p > 1.0)) {
    throw std::invalid_argument("update_direction: norm order must be > 1");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) {
      throw std::domain_error("update_direction: non-finite gradient");
    }
  }
  std::vector<double> delta(grad.size(), 0.0);
  double q = std::isinf(p) ? 1.0 : p / (p - 1.0);
  double norm_qq = 0.0;  // ||g||_q^q
  bool all_zero = true;
  for (double g : grad) {
    if (g != 0.0) all_zero = false;
    norm_qq += std::pow(std::abs(g), q);
  }
  if (all_zero) return delta;  // 0/0 in the formula; stationary by convention

  double inv_p = std::isinf(p) ? 0.0 : 1.0 / p;
  double denom = std::pow(norm_qq, inv_p);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    double g = grad[i];
    double sign = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
    delta[i] = epsilon * sign * std::pow(std::abs(g), q - 1.0) / denom;
  }
  return delta;
}

std::vector<double> project(std::vector<double> r, double epsilon, double p) {
  if (std::isinf(p)) {
    for (double& x : r) x = std::clamp(x, -epsilon, epsilon);
    return r;
  }
  if (p == 2.0) {
    double n = l2_norm(r);
    if (n > epsilon) {
      double s = epsilon / n;
      for (double& x : r) x *= s;
    }
    return r;
  }
  throw std::invalid_argument("project: norm order must be inf or 2");
}

AttackContext AttackContext::make(const EncoderWeights& image_w,
                                  std::span<const DenseArray> visual_deep,
                                  std::span<const FeatureVector> classifiers,
                                  double tau) {
  if (classifiers.empty()) {
    throw std::invalid_argument("AttackContext: empty classifier set");
  }
  if (!(tau > 0.0)) {
    throw std::invalid_argument("AttackContext: tau must be > 0");
  }
  AttackContext ctx;
  ctx.image_weights = &image_w;
  ctx.visual_deep.assign(visual_deep.begin(), visual_deep.end());
  std::size_t k = classifiers.size();
  std::size_t d = classifiers[0].size();
  std::vector<double> rows;
  rows.reserve(k * d);
  for (const FeatureVector& f : classifiers) {
    if (f.size() != d) {
      throw std::invalid_argument("AttackContext: ragged classifier rows");
    }
    rows.insert(rows.end(), f.v.begin(), f.v.end());
  }
  ctx.classifier = DenseArray::matrix(k, d, std::move(rows));
  ctx.tau = tau;
  return ctx;
}

Var lee_loss(Tape& tape, Var x, std::size_t label, const AttackContext& ctx) {
  std::size_t k = ctx.classifier.rows();
  if (label >= k) {
    throw std::invalid_argument("lee_loss: class id " + std::to_string(label) +
                                " out of range for " + std::to_string(k) +
                                " classes");
  }
  std::vector<Var> deep;
  deep.reserve(ctx.visual_deep.size());
  for (const DenseArray& d : ctx.visual_deep) deep.push_back(tape.constant(d));
  Var v = encode_image(tape, x, deep, *ctx.image_weights);
  static const DenseArray no_bias;
  Var logits = tape.scale(tape.affine(ctx.classifier, no_bias, v), 1.0 / ctx.tau);
  return tape.scale(tape.pick(tape.log_softmax(logits), label), -1.0);
}

double lee_loss_value(const DenseArray& x, std::size_t label,
                      const AttackContext& ctx) {
  Tape tape;
  Var xv = tape.constant(x);
  return lee_loss(tape, xv, label, ctx).value().values[0];
}

DenseArray pgd_attack(const DenseArray& x, std::size_t label,
                      const AttackConfig& cfg, const AttackContext& ctx) {
  cfg.validate();
  if (x.rank() != 1) {
    throw std::invalid_argument("pgd_attack: input must be a vector");
  }
  for (double v : x.values) {
    if (v < 0.0 || v > 1.0) {
      throw std::invalid_argument("pgd_attack: input outside [0,1]");
    }
  }
  std::vector<double> r(x.size(), 0.0);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    std::vector<double> shifted(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) shifted[i] = x.values[i] + r[i];
    Tape tape;
    Var xv = tape.leaf(DenseArray::vec(std::move(shifted)));
    Var loss = lee_loss(tape, xv, label, ctx);
    tape.backward(loss);
    std::vector<double> delta =
        update_direction(xv.grad().values, cfg.p, cfg.epsilon);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += cfg.mu * delta[i];
    r = project(std::move(r), cfg.epsilon, cfg.p);
  }
  std::vector<double> adv(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    adv[i] = std::clamp(x.values[i] + r[i], 0.0, 1.0);
  }
  return DenseArray::vec(std::move(adv));
}

}  // namespace promptlab
