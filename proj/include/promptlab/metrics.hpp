#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "promptlab/dataset.hpp"
#include "promptlab/encoders.hpp"

namespace promptlab {

// 2*base*novel / (base + novel); rejects non-positive inputs.
double harmonic_mean(double base, double novel);

struct EpochRecord {
  std::size_t epoch = 0;
  double ce = 0.0;
  double sp = 0.0;
  double dis = 0.0;
  double total = 0.0;
  double train_acc = 0.0;
};

struct FinalReport {
  std::string task;
  std::uint64_t seed = 0;
  std::string config_digest;
  // base2novel
  double base_acc = 0.0;
  double novel_acc = 0.0;
  double hm = 0.0;
  // fewshot
  double accuracy = 0.0;
};

// Fraction of samples whose argmax alignment class matches the label.
// Prediction is over the given class set; sample labels are global ids.
// Temperature cancels under argmax and plays no part here.
double evaluate(const PromptState& state,
                std::span<const ClassEmbedding> classes,
                const Dataset& data, std::span<const std::size_t> indices,
                const EncoderWeights& text_w, const EncoderWeights& image_w);

// Same contract against precomputed text features (one per class).
double evaluate_features(std::span<const FeatureVector> text_features,
                         std::span<const std::size_t> class_ids,
                         const Dataset& data,
                         std::span<const std::size_t> indices,
                         std::span<const DenseArray> visual_deep,
                         const EncoderWeights& image_w);

}  // namespace promptlab
