#include "promptlab/objective.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace promptlab {

Var ce_loss(Tape& tape, Var v_image, std::span<const Var> text_features,
            std::size_t label, double tau) {
  if (text_features.empty()) {
    throw std::invalid_argument("ce_loss: empty class set");
  }
  if (label >= text_features.size()) {
    throw std::invalid_argument("ce_loss: class id " + std::to_string(label) +
                                " out of range for " +
                                std::to_string(text_features.size()) +
                                " classes");
  }
  if (!(tau > 0.0)) throw std::invalid_argument("ce_loss: tau must be > 0");
  std::vector<Var> sims;
  sims.reserve(text_features.size());
  for (Var t : text_features) sims.push_back(tape.dot(t, v_image));
  Var logits = tape.scale(tape.stack_scalars(sims), 1.0 / tau);
  return tape.scale(tape.pick(tape.log_softmax(logits), label), -1.0);
}

Var sp_loss(Tape& tape, Var v_nat, Var v_adv,
            std::span<const Var> tuning_features,
            const DenseArray& hand_classifier, double tau, bool reverse_kl) {
  if (tuning_features.empty()) {
    throw std::invalid_argument("sp_loss: empty class set");
  }
  if (hand_classifier.rank() != 2 ||
      hand_classifier.rows() != tuning_features.size()) {
    throw std::invalid_argument("sp_loss: classifier rows " +
                                hand_classifier.shape_string() +
                                " != class count " +
                                std::to_string(tuning_features.size()));
  }
  if (!(tau > 0.0)) throw std::invalid_argument("sp_loss: tau must be > 0");
  std::vector<Var> sims;
  sims.reserve(tuning_features.size());
  for (Var t : tuning_features) sims.push_back(tape.dot(t, v_nat));
  Var nat_logits = tape.scale(tape.stack_scalars(sims), 1.0 / tau);
  static const DenseArray no_bias;
  Var adv_logits =
      tape.scale(tape.affine(hand_classifier, no_bias, v_adv), 1.0 / tau);
  return reverse_kl ? tape.kl_from_logits(adv_logits, nat_logits)
                    : tape.kl_from_logits(nat_logits, adv_logits);
}

LossBreakdown total_loss(double ce, double sp, double dis, double alpha,
                         LossToggles toggles) {
  LossBreakdown out;
  out.alpha = alpha;
  out.ce = ce;
  out.sp = toggles.sp_enabled ? sp : 0.0;
  out.dis = toggles.ot_enabled ? dis : 0.0;
  auto reject = [](double v, const char* term) {
    if (!std::isfinite(v)) {
      throw std::domain_error(std::string("total_loss: non-finite term '") +
                              term + "'");
    }
  };
  reject(out.ce, "ce");
  reject(out.sp, "sp");
  reject(out.dis, "dis");
  out.total = (out.ce + out.sp) + alpha * out.dis;
  reject(out.total, "total");
  return out;
}

Var combine_losses(Tape& tape, Var ce, Var sp, Var dis, double alpha,
                   LossToggles toggles) {
  if (!toggles.sp_enabled) sp = tape.constant(DenseArray::scalar(0.0));
  if (!toggles.ot_enabled) dis = tape.constant(DenseArray::scalar(0.0));
  return tape.add(tape.add(ce, sp), tape.scale(dis, alpha));
}

PromptGrads collect_prompt_grads(Var context, std::span<const Var> text_deep,
                                 std::span<const Var> visual_deep) {
  PromptGrads g;
  g.context = context.grad();
  g.text_deep.reserve(text_deep.size());
  for (Var v : text_deep) g.text_deep.push_back(v.grad());
  g.visual_deep.reserve(visual_deep.size());
  for (Var v : visual_deep) g.visual_deep.push_back(v.grad());
  return g;
}

namespace {
void axpy_check(DenseArray& theta, const DenseArray& grad, double lr,
                const char* what) {
  if (!theta.same_shape(grad)) {
    throw std::invalid_argument(std::string("sgd_step: ") + what +
                                " gradient shape " + grad.shape_string() +
                                " != parameter shape " + theta.shape_string());
  }
  for (std::size_t i = 0; i < theta.size(); ++i) {
    theta.values[i] -= lr * grad.values[i];
  }
}
}  // namespace

void sgd_step(PromptState& state, const PromptGrads& grads, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: lr must be > 0");
  if (grads.text_deep.size() != state.text_deep.size() ||
      grads.visual_deep.size() != state.visual_deep.size()) {
    throw std::invalid_argument("sgd_step: deep prompt count mismatch");
  }
  axpy_check(state.context, grads.context, lr, "context");
  for (std::size_t j = 0; j < state.text_deep.size(); ++j) {
    axpy_check(state.text_deep[j], grads.text_deep[j], lr, "text deep prompt");
  }
  for (std::size_t j = 0; j < state.visual_deep.size(); ++j) {
    axpy_check(state.visual_deep[j], grads.visual_deep[j], lr,
               "visual deep prompt");
  }
}

}  // namespace promptlab
