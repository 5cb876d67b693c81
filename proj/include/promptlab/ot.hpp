#pragma once

#include <span>
#include <vector>

#include "promptlab/array.hpp"
#include "promptlab/encoders.hpp"
#include "promptlab/tape.hpp"

namespace promptlab {

// Row and column weights of a transport problem; nonnegative, each summing
// to one.
struct Marginals {
  std::vector<double> a;  // rows (M)
  std::vector<double> b;  // columns (N)

  static Marginals uniform(std::size_t m, std::size_t n);
  void validate() const;
};

struct SinkhornOptions {
  double eta = 0.05;       // entropic weight
  double tol = 1e-6;       // marginal violation tolerance
  std::size_t max_iter = 200;
};

struct SinkhornResult {
  DenseArray plan;  // M x N, nonnegative, marginals within tol when converged
  bool converged = false;
  std::size_t iterations = 0;
  double marginal_error = 0.0;
};

// c_ij = 1 - <t_i, t_j> over unit-norm features; entries in [0, 2].
DenseArray cost_matrix_values(std::span<const FeatureVector> tun,
                              std::span<const FeatureVector> hand);

// In-graph cost matrix, differentiable w.r.t. the tuning features.
Var cost_matrix(Tape& tape, std::span<const Var> tun,
                std::span<const FeatureVector> hand);

// Log-domain Sinkhorn. M=1 (and N=1) problems are forced by their marginals
// and are returned in closed form.
SinkhornResult sinkhorn(const DenseArray& cost, const Marginals& m,
                        const SinkhornOptions& opt);

// Dis = <plan, cost>.
double ot_distance_value(const DenseArray& cost, const DenseArray& plan);

// In-graph Dis with the plan held constant, so the gradient flows through
// the cost only (envelope form).
Var ot_distance(Tape& tape, Var cost, const DenseArray& plan);

// Exact OT for square costs with uniform marginals via enumeration of the
// N! permutation extreme points. Test oracle; rejects N > 6.
double exact_ot_bruteforce(const DenseArray& cost);

// Mean over classes of the M=1 transport distance between the class's
// single tuning feature and its hand-crafted feature set.
Var textual_regularizer(Tape& tape, std::span<const Var> tuning_features,
                        std::span<const std::vector<FeatureVector>* const> hand_sets,
                        const SinkhornOptions& opt);

// Convenience form that builds the tuning features from a prompt context.
Var textual_regularizer(Tape& tape, Var context,
                        std::span<const Var> text_deep,
                        std::span<const ClassEmbedding> classes,
                        HandcraftedCache& cache, const EncoderWeights& text_w,
                        const SinkhornOptions& opt);

}  // namespace promptlab
