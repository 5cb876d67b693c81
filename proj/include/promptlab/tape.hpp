#pragma once

#include <functional>
#include <span>
#include <vector>

#include "promptlab/array.hpp"

namespace promptlab {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const DenseArray& value() const;
  const DenseArray& grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Append-only computation tape. Nodes reference only earlier nodes, so the
// reverse pass is a single backward sweep in creation order. A tape instance
// is confined to one thread; gradients accumulate (+=) when a node feeds
// several consumers and are cleared with zero_grad().
class Tape {
 public:
  // Differentiable leaf (a tuning parameter or an attacked input).
  Var leaf(DenseArray v);
  // Non-differentiable input. Backward never writes a gradient for it.
  Var constant(DenseArray v);

  // --- primitives -------------------------------------------------------
  // y = W x + b. W is (out x in), b is (out) or empty for no bias. The
  // referenced arrays must outlive the tape; they receive no gradient.
  Var affine(const DenseArray& w, const DenseArray& b, Var x);
  Var tanh(Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  // Stack 1-d vectors of equal width into a (n x d) matrix.
  Var concat_rows(std::span<const Var> rows);
  Var mean_rows(Var m);
  Var l2_normalize(Var v);
  Var dot(Var a, Var b);
  Var sum(Var v);
  Var softmax(Var logits);
  Var log_softmax(Var logits);
  Var pick(Var v, std::size_t index);
  Var stack_scalars(std::span<const Var> xs);
  // KL(softmax(p_logits) || softmax(q_logits)), with 0*log 0 = 0.
  Var kl_from_logits(Var p_logits, Var q_logits);
  // sum_i weights_i * x_i against a constant weight array of equal shape.
  Var weighted_sum(Var x, const DenseArray& weights);

  // --- engine -----------------------------------------------------------
  // Reverse sweep from a scalar output. Gradients accumulate into every
  // contributing node; leaves untouched by the output keep exactly zero.
  void backward(Var output);
  void zero_grad();
  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    DenseArray value;
    DenseArray grad;
    std::function<void(Tape&)> back;  // empty for leaves and constants
  };

  Var push(DenseArray value, const char* op,
           std::function<void(Tape&)> back);
  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  void check_same_tape(Var v, const char* op) const;

  std::vector<Node> nodes_;
};

}  // namespace promptlab
