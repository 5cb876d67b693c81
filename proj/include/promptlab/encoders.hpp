#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "promptlab/array.hpp"
#include "promptlab/tape.hpp"

namespace promptlab {

enum class Modality { text, image };

// Frozen stand-in encoder: a stack of seeded affine+tanh layers followed by
// l2 normalization of the last activation. Layer j outputs hidden_dim except
// the final layer, which outputs feature_dim. Immutable after construction;
// the same seed always reproduces the same weights.
struct EncoderWeights {
  Modality modality = Modality::text;
  std::size_t input_dim = 0;
  std::size_t layers = 0;  // J
  std::size_t hidden_dim = 0;
  std::size_t feature_dim = 0;
  std::vector<DenseArray> w;  // J matrices
  std::vector<DenseArray> b;  // J bias vectors

  static EncoderWeights make(Modality m, std::size_t input_dim,
                             std::size_t layers, std::size_t hidden_dim,
                             std::size_t feature_dim, std::uint64_t seed);

  std::size_t layer_width(std::size_t j) const {
    return j + 1 == layers ? feature_dim : hidden_dim;
  }
};

// Stand-in for the tokenized class name: a fixed seeded embedding,
// deterministic per (seed, class id).
struct ClassEmbedding {
  std::size_t class_id = 0;
  DenseArray embedding;  // d_emb

  static ClassEmbedding make(std::uint64_t seed, std::size_t class_id,
                             std::size_t d_emb);
};

// N fixed template contexts, stand-ins for "a picture of a",
// "a bad photo of a", ... Immutable once built.
struct PromptBank {
  std::vector<DenseArray> templates;  // each L x d_emb

  static PromptBank make(std::uint64_t seed, std::size_t n, std::size_t length,
                         std::size_t d_emb);
  std::size_t size() const { return templates.size(); }
};

// The tuning parameters: learnable textual context plus per-layer additive
// deep prompts on both branches. Confined to its owning training loop.
struct PromptState {
  DenseArray context;                   // L x d_emb
  std::vector<DenseArray> text_deep;    // D vectors, widths of layers 1..D
  std::vector<DenseArray> visual_deep;  // D vectors, widths of layers 1..D

  // Context starts as a copy of the first bank template ("a photo of a"
  // stand-in); deep prompts start at zero, which leaves the frozen encoder
  // behaviour unchanged until training moves them.
  static PromptState init(const PromptBank& bank, const EncoderWeights& text_w,
                          const EncoderWeights& image_w, std::size_t depth);
  void validate(const EncoderWeights& text_w,
                const EncoderWeights& image_w) const;
};

// Unit-l2-norm feature. The constructor enforces the norm invariant.
struct FeatureVector {
  std::vector<double> v;

  explicit FeatureVector(std::vector<double> values);
  std::size_t size() const { return v.size(); }
  double cosine(const FeatureVector& o) const { return dot_product(v, o.v); }
};

FeatureVector normalized_feature(std::vector<double> raw);

// --- graph-building encoders -------------------------------------------
// Differentiable w.r.t. context and the deep-prompt vars. The frozen
// weights receive no gradient by construction.
Var encode_text(Tape& tape, Var context, const DenseArray& class_emb,
                std::span<const Var> deep_prompts, const EncoderWeights& w);

// Differentiable w.r.t. x and the visual deep prompts.
Var encode_image(Tape& tape, Var x, std::span<const Var> deep_prompts,
                 const EncoderWeights& w);

// --- value-level forwards (no gradients) --------------------------------
FeatureVector encode_text_value(const DenseArray& context,
                                const DenseArray& class_emb,
                                std::span<const DenseArray> deep_prompts,
                                const EncoderWeights& w);
FeatureVector encode_image_value(const DenseArray& x,
                                 std::span<const DenseArray> deep_prompts,
                                 const EncoderWeights& w);

// T^sets for one class: one frozen feature per bank template. Constant —
// no gradient ever flows into the bank.
std::vector<FeatureVector> handcrafted_features(const PromptBank& bank,
                                                const ClassEmbedding& cls,
                                                const EncoderWeights& w);

// t_hand: l2-normalized mean of the template features. Rejects a
// degenerate bank whose features cancel to the zero vector.
FeatureVector compress_handcrafted(const std::vector<FeatureVector>& set);

// Per-class cache of T^sets and t_hand; computed once, then bit-identical
// on every later call.
class HandcraftedCache {
 public:
  HandcraftedCache(const PromptBank* bank, const EncoderWeights* text_w)
      : bank_(bank), text_w_(text_w) {}

  const std::vector<FeatureVector>& features(const ClassEmbedding& cls);
  const FeatureVector& compressed(const ClassEmbedding& cls);

 private:
  struct Entry {
    std::vector<FeatureVector> features;
    FeatureVector compressed;
  };
  const Entry& entry(const ClassEmbedding& cls);
  const PromptBank* bank_;
  const EncoderWeights* text_w_;
  std::map<std::size_t, Entry> cache_;
};

}  // namespace promptlab
