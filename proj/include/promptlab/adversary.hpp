#pragma once

#include <limits>
#include <span>
#include <vector>

#include "promptlab/array.hpp"
#include "promptlab/encoders.hpp"
#include "promptlab/tape.hpp"

namespace promptlab {

// Norm order of the perturbation ball. Finite values > 1 work through the
// general dual-norm update; infinity selects the sign update.
inline constexpr double kLinf = std::numeric_limits<double>::infinity();

struct AttackConfig {
  double epsilon = 1.0 / 255.0;  // ball radius in input units
  double mu = 1.0 / 255.0;       // step size, defaults to epsilon
  std::size_t steps = 2;         // T
  double p = kLinf;              // norm order (inf or 2)

  void validate() const;
};

// delta = eps * sign(g) * |g|^(q-1) / (||g||_q^q)^(1/p), q dual to p.
// Collapses to eps*sign(g) for p=inf and eps*g/||g||_2 for p=2; a zero
// gradient maps to the zero direction.
std::vector<double> update_direction(std::span<const double> grad, double p,
                                     double epsilon);

// Projection onto the l_p ball of radius epsilon; idempotent.
std::vector<double> project(std::vector<double> r, double epsilon, double p);

// Everything the attack reads, frozen for its duration: the image branch,
// the current visual deep prompts (as constants) and the classifier rows.
struct AttackContext {
  const EncoderWeights* image_weights = nullptr;
  std::vector<DenseArray> visual_deep;   // current values
  DenseArray classifier;                 // K x d_feat, one row per class
  double tau = 0.01;

  static AttackContext make(const EncoderWeights& image_w,
                            std::span<const DenseArray> visual_deep,
                            std::span<const FeatureVector> classifiers,
                            double tau);
};

// Attacked loss: cross-entropy of the temperature-scaled alignment scores
// between the classifier rows and the encoded (possibly perturbed) image.
Var lee_loss(Tape& tape, Var x, std::size_t label, const AttackContext& ctx);
double lee_loss_value(const DenseArray& x, std::size_t label,
                      const AttackContext& ctx);

// Iterated projected ascent from r=0; the result is clipped to [0,1] and
// returned as a plain array, so no gradient flows back into the attack.
DenseArray pgd_attack(const DenseArray& x, std::size_t label,
                      const AttackConfig& cfg, const AttackContext& ctx);

}  // namespace promptlab
