#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "promptlab/array.hpp"
#include "promptlab/encoders.hpp"

namespace promptlab {

// Synthetic stand-in data: class centers are a fixed seeded linear image of
// the class embeddings, clipped to the pixel range, so novel-class transfer
// stays learnable in principle.
struct SyntheticDatasetSpec {
  std::size_t classes = 10;        // K
  std::size_t input_dim = 64;      // d_in
  std::size_t samples_per_class = 36;
  double sigma = 0.08;             // noise scale
  std::uint64_t seed = 1;
  std::size_t d_emb = 16;          // class embedding width

  void validate() const;
};

struct Sample {
  DenseArray x;       // d_in, entries in [0, 1]
  std::size_t label;  // global class id
};

struct Dataset {
  SyntheticDatasetSpec spec;
  DenseArray center_map;                        // d_in x d_emb
  std::vector<ClassEmbedding> class_embeddings; // K
  std::vector<DenseArray> centers;              // K, clip(map . emb, 0, 1)
  std::vector<Sample> samples;                  // grouped by class

  std::span<const Sample> class_samples(std::size_t cls) const;
};

Dataset generate_dataset(const SyntheticDatasetSpec& spec);

// First ceil(K/2) class ids are base, the rest novel.
struct Split {
  std::vector<std::size_t> base;
  std::vector<std::size_t> novel;

  static Split of(std::size_t classes);
};

// Exactly `shots` sample indices per listed class, drawn without
// replacement from the class's pool.
std::vector<std::size_t> sample_few_shot(const Dataset& data,
                                         std::span<const std::size_t> classes,
                                         std::size_t shots,
                                         std::uint64_t seed);

// `per_class` indices per listed class, disjoint from `exclude`.
std::vector<std::size_t> sample_eval_set(const Dataset& data,
                                         std::span<const std::size_t> classes,
                                         std::size_t per_class,
                                         std::span<const std::size_t> exclude,
                                         std::uint64_t seed);

}  // namespace promptlab
