#pragma once

#include <span>
#include <vector>

#include "promptlab/array.hpp"
#include "promptlab/encoders.hpp"
#include "promptlab/tape.hpp"

namespace promptlab {

struct LossToggles {
  bool ot_enabled = true;
  bool sp_enabled = true;
};

// Scalar parts of one training step. total is the exact weighted sum of the
// parts as combined in-graph.
struct LossBreakdown {
  double ce = 0.0;
  double sp = 0.0;
  double dis = 0.0;
  double total = 0.0;
  double alpha = 0.0;
};

// -log softmax_y of the temperature-scaled alignment scores between the
// image feature and the per-class tuning text features.
Var ce_loss(Tape& tape, Var v_image, std::span<const Var> text_features,
            std::size_t label, double tau);

// KL between the natural alignment distribution (tuning features vs v_n)
// and the adversarial one (hand-crafted classifier vs v_adv), both as
// class softmaxes at shared tau. reverse_kl swaps the argument order.
Var sp_loss(Tape& tape, Var v_nat, Var v_adv,
            std::span<const Var> tuning_features,
            const DenseArray& hand_classifier, double tau,
            bool reverse_kl = false);

// total = ce + sp + alpha*dis with disabled terms replaced by literal 0.
// Rejects non-finite parts, naming the offending term.
LossBreakdown total_loss(double ce, double sp, double dis, double alpha,
                         LossToggles toggles);

// In-graph combination with the same arithmetic and toggle behaviour.
Var combine_losses(Tape& tape, Var ce, Var sp, Var dis, double alpha,
                   LossToggles toggles);

// Gradients for the prompt parameters, in PromptState layout.
struct PromptGrads {
  DenseArray context;
  std::vector<DenseArray> text_deep;
  std::vector<DenseArray> visual_deep;
};

PromptGrads collect_prompt_grads(Var context, std::span<const Var> text_deep,
                                 std::span<const Var> visual_deep);

// theta <- theta - lr * grad. Frozen weights are not part of PromptState
// and are untouched by construction.
void sgd_step(PromptState& state, const PromptGrads& grads, double lr);

}  // namespace promptlab
