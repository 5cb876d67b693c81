#include "promptlab/dataset.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>

#include "promptlab/rng.hpp"

namespace promptlab {

void SyntheticDatasetSpec::validate() const {
  if (classes < 2) {
    throw std::invalid_argument("SyntheticDatasetSpec: need at least 2 classes");
  }
  if (input_dim == 0 || d_emb == 0 || samples_per_class == 0) {
    throw std::invalid_argument("SyntheticDatasetSpec: zero dimension");
  }
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("SyntheticDatasetSpec: sigma must be > 0");
  }
}

std::span<const Sample> Dataset::class_samples(std::size_t cls) const {
  std::size_t n = spec.samples_per_class;
  return std::span<const Sample>(samples).subspan(cls * n, n);
}

Dataset generate_dataset(const SyntheticDatasetSpec& spec) {
  spec.validate();
  Dataset d;
  d.spec = spec;

  Rng map_rng(derive_seed(spec.seed, "center_map"));
  std::vector<double> map(spec.input_dim * spec.d_emb);
  for (double& x : map) x = map_rng.normal();
  d.center_map = DenseArray::matrix(spec.input_dim, spec.d_emb, std::move(map));

  for (std::size_t c = 0; c < spec.classes; ++c) {
    d.class_embeddings.push_back(
        ClassEmbedding::make(spec.seed, c, spec.d_emb));
    const DenseArray& e = d.class_embeddings.back().embedding;
    std::vector<double> center(spec.input_dim, 0.0);
    for (std::size_t i = 0; i < spec.input_dim; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < spec.d_emb; ++j) {
        s += d.center_map.at(i, j) * e.values[j];
      }
      center[i] = std::clamp(s, 0.0, 1.0);
    }
    d.centers.push_back(DenseArray::vec(std::move(center)));
  }

  d.samples.reserve(spec.classes * spec.samples_per_class);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    Rng noise(derive_seed(spec.seed, "samples", c));
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      std::vector<double> x(spec.input_dim);
      for (std::size_t i = 0; i < spec.input_dim; ++i) {
        x[i] = std::clamp(d.centers[c].values[i] + spec.sigma * noise.normal(),
                          0.0, 1.0);
      }
      d.samples.push_back(Sample{DenseArray::vec(std::move(x)), c});
    }
  }
  return d;
}

Split Split::of(std::size_t classes) {
  Split s;
  std::size_t base_count = (classes + 1) / 2;
  for (std::size_t c = 0; c < classes; ++c) {
    (c < base_count ? s.base : s.novel).push_back(c);
  }
  return s;
}

std::vector<std::size_t> sample_few_shot(const Dataset& data,
                                         std::span<const std::size_t> classes,
                                         std::size_t shots,
                                         std::uint64_t seed) {
  std::size_t pool = data.spec.samples_per_class;
  if (shots > pool) {
    throw std::invalid_argument("sample_few_shot: " + std::to_string(shots) +
                                " shots > " + std::to_string(pool) +
                                " samples per class");
  }
  std::vector<std::size_t> out;
  out.reserve(classes.size() * shots);
  for (std::size_t cls : classes) {
    Rng rng(derive_seed(seed, "fewshot", cls));
    std::vector<std::size_t> idx(pool);
    for (std::size_t i = 0; i < pool; ++i) idx[i] = cls * pool + i;
    // partial Fisher-Yates: the first `shots` entries are the draw
    for (std::size_t i = 0; i < shots; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.below(pool - i));
      std::swap(idx[i], idx[j]);
    }
    out.insert(out.end(), idx.begin(), idx.begin() + shots);
  }
  return out;
}

std::vector<std::size_t> sample_eval_set(const Dataset& data,
                                         std::span<const std::size_t> classes,
                                         std::size_t per_class,
                                         std::span<const std::size_t> exclude,
                                         std::uint64_t seed) {
  std::set<std::size_t> banned(exclude.begin(), exclude.end());
  std::size_t pool = data.spec.samples_per_class;
  std::vector<std::size_t> out;
  out.reserve(classes.size() * per_class);
  for (std::size_t cls : classes) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool; ++i) {
      std::size_t idx = cls * pool + i;
      if (!banned.count(idx)) candidates.push_back(idx);
    }
    if (candidates.size() < per_class) {
      throw std::invalid_argument(
          "sample_eval_set: class " + std::to_string(cls) + " has only " +
          std::to_string(candidates.size()) + " free samples, need " +
          std::to_string(per_class));
    }
    Rng rng(derive_seed(seed, "evalset", cls));
    for (std::size_t i = 0; i < per_class; ++i) {
      std::size_t j =
          i + static_cast<std::size_t>(rng.below(candidates.size() - i));
      std::swap(candidates[i], candidates[j]);
    }
    out.insert(out.end(), candidates.begin(), candidates.begin() + per_class);
  }
  return out;
}

}  // namespace promptlab
