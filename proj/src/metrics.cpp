#include "promptlab/metrics.hpp"

#include <stdexcept>

namespace promptlab {

double harmonic_mean(double base, double novel) {
  if (!(base > 0.0) || !(novel > 0.0)) {
    throw std::invalid_argument("harmonic_mean: inputs must be positive");
  }
  return 2.0 * base * novel / (base + novel);
}

double evaluate_features(std::span<const FeatureVector> text_features,
                         std::span<const std::size_t> class_ids,
                         const Dataset& data,
                         std::span<const std::size_t> indices,
                         std::span<const DenseArray> visual_deep,
                         const EncoderWeights& image_w) {
  if (indices.empty()) {
    throw std::invalid_argument("evaluate: empty eval set");
  }
  if (text_features.size() != class_ids.size() || text_features.empty()) {
    throw std::invalid_argument("evaluate: class set mismatch");
  }
  std::size_t correct = 0;
  for (std::size_t idx : indices) {
    const Sample& s = data.samples.at(idx);
    FeatureVector v = encode_image_value(s.x, visual_deep, image_w);
    std::size_t best = 0;
    double best_sim = -2.0;
    for (std::size_t k = 0; k < text_features.size(); ++k) {
      double sim = text_features[k].cosine(v);
      if (sim > best_sim) {
        best_sim = sim;
        best = k;
      }
    }
    if (class_ids[best] == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

double evaluate(const PromptState& state,
                std::span<const ClassEmbedding> classes,
                const Dataset& data, std::span<const std::size_t> indices,
                const EncoderWeights& text_w, const EncoderWeights& image_w) {
  if (classes.empty()) {
    throw std::invalid_argument("evaluate: empty class set");
  }
  std::vector<FeatureVector> feats;
  std::vector<std::size_t> ids;
  feats.reserve(classes.size());
  ids.reserve(classes.size());
  for (const ClassEmbedding& cls : classes) {
    feats.push_back(encode_text_value(state.context, cls.embedding,
                                      state.text_deep, text_w));
    ids.push_back(cls.class_id);
  }
  return evaluate_features(feats, ids, data, indices, state.visual_deep,
                           image_w);
}

}  // namespace promptlab
