#include "promptlab/encoders.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "promptlab/rng.hpp"

namespace promptlab {

EncoderWeights EncoderWeights::make(Modality m, std::size_t input_dim,
                                    std::size_t layers, std::size_t hidden_dim,
                                    std::size_t feature_dim,
                                    std::uint64_t seed) {
  if (layers == 0 || input_dim == 0 || hidden_dim == 0 || feature_dim == 0) {
    throw std::invalid_argument("EncoderWeights: dimensions must be positive");
  }
  EncoderWeights ew;
  ew.modality = m;
  ew.input_dim = input_dim;
  ew.layers = layers;
  ew.hidden_dim = hidden_dim;
  ew.feature_dim = feature_dim;
  std::size_t in = input_dim;
  for (std::size_t j = 0; j < layers; ++j) {
    std::size_t out = ew.layer_width(j);
    Rng wr(derive_seed(seed, "enc.w", j));
    std::vector<double> wv(out * in);
    double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& x : wv) x = wr.normal() * scale;
    Rng br(derive_seed(seed, "enc.b", j));
    std::vector<double> bv(out);
    for (double& x : bv) x = br.normal() * 0.05;
    ew.w.push_back(DenseArray::matrix(out, in, std::move(wv)));
    ew.b.push_back(DenseArray::vec(std::move(bv)));
    in = out;
  }
  return ew;
}

ClassEmbedding ClassEmbedding::make(std::uint64_t seed, std::size_t class_id,
                                    std::size_t d_emb) {
  Rng rng(derive_seed(seed, "class_emb", class_id));
  std::vector<double> e(d_emb);
  double scale = 1.0 / std::sqrt(static_cast<double>(d_emb));
  for (double& x : e) x = rng.normal() * scale;
  return ClassEmbedding{class_id, DenseArray::vec(std::move(e))};
}

PromptBank PromptBank::make(std::uint64_t seed, std::size_t n,
                            std::size_t length, std::size_t d_emb) {
  if (n == 0) throw std::invalid_argument("PromptBank: need at least one template");
  PromptBank bank;
  double scale = 1.0 / std::sqrt(static_cast<double>(d_emb));
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, "bank", i));
    std::vector<double> t(length * d_emb);
    for (double& x : t) x = rng.normal() * scale;
    bank.templates.push_back(DenseArray::matrix(length, d_emb, std::move(t)));
  }
  return bank;
}

PromptState PromptState::init(const PromptBank& bank,
                              const EncoderWeights& text_w,
                              const EncoderWeights& image_w,
                              std::size_t depth) {
  PromptState s;
  s.context = bank.templates.at(0);
  for (std::size_t j = 0; j < depth; ++j) {
    s.text_deep.push_back(DenseArray::zeros({text_w.layer_width(j)}));
    s.visual_deep.push_back(DenseArray::zeros({image_w.layer_width(j)}));
  }
  s.validate(text_w, image_w);
  return s;
}

void PromptState::validate(const EncoderWeights& text_w,
                           const EncoderWeights& image_w) const {
  if (context.rank() != 2 || context.rows() < 1) {
    throw std::invalid_argument("PromptState: context must be L x d_emb, L >= 1");
  }
  if (context.cols() != text_w.input_dim) {
    throw std::invalid_argument("PromptState: context width " +
                                std::to_string(context.cols()) +
                                " != text input dim " +
                                std::to_string(text_w.input_dim));
  }
  if (text_deep.size() != visual_deep.size()) {
    throw std::invalid_argument("PromptState: branch depth mismatch");
  }
  std::size_t depth = text_deep.size();
  if (depth < 1 || depth > text_w.layers || depth > image_w.layers) {
    throw std::invalid_argument("PromptState: depth " + std::to_string(depth) +
                                " outside [1, layers]");
  }
  for (std::size_t j = 0; j < depth; ++j) {
    if (text_deep[j].size() != text_w.layer_width(j) ||
        visual_deep[j].size() != image_w.layer_width(j)) {
      throw std::invalid_argument("PromptState: deep prompt width mismatch at layer " +
                                  std::to_string(j));
    }
    if (!text_deep[j].all_finite() || !visual_deep[j].all_finite()) {
      throw std::invalid_argument("PromptState: non-finite deep prompt");
    }
  }
  if (!context.all_finite()) {
    throw std::invalid_argument("PromptState: non-finite context");
  }
}

FeatureVector::FeatureVector(std::vector<double> values) : v(std::move(values)) {
  double n = l2_norm(v);
  if (std::abs(n - 1.0) > 1e-9) {
    throw std::invalid_argument("FeatureVector: norm " + std::to_string(n) +
                                " violates the unit-norm invariant");
  }
}

FeatureVector normalized_feature(std::vector<double> raw) {
  double n = l2_norm(raw);
  if (n == 0.0) throw std::domain_error("normalized_feature: zero vector");
  for (double& x : raw) x /= n;
  return FeatureVector(std::move(raw));
}

namespace {

Var run_layers(Tape& tape, Var h, std::span<const Var> deep_prompts,
               const EncoderWeights& w) {
  if (deep_prompts.size() > w.layers) {
    throw std::invalid_argument("encoder: " +
                                std::to_string(deep_prompts.size()) +
                                " deep prompts for " +
                                std::to_string(w.layers) + " layers");
  }
  for (std::size_t j = 0; j < w.layers; ++j) {
    Var z = tape.affine(w.w[j], w.b[j], h);
    if (j < deep_prompts.size()) {
      if (deep_prompts[j].value().size() != w.layer_width(j)) {
        throw std::invalid_argument(
            "encoder: deep prompt width " +
            std::to_string(deep_prompts[j].value().size()) +
            " != layer width " + std::to_string(w.layer_width(j)));
      }
      z = tape.add(z, deep_prompts[j]);
    }
    h = tape.tanh(z);
  }
  return tape.l2_normalize(h);
}

}  // namespace

Var encode_text(Tape& tape, Var context, const DenseArray& class_emb,
                std::span<const Var> deep_prompts, const EncoderWeights& w) {
  const DenseArray& ctx = context.value();
  if (ctx.rank() != 2 || ctx.cols() != w.input_dim) {
    throw std::invalid_argument("encode_text: context width != d_emb (" +
                                std::to_string(w.input_dim) + ")");
  }
  if (class_emb.rank() != 1 || class_emb.size() != w.input_dim) {
    throw std::invalid_argument("encode_text: class embedding width " +
                                std::to_string(class_emb.size()) +
                                " != d_emb " + std::to_string(w.input_dim));
  }
  Var cls = tape.constant(class_emb);
  std::vector<Var> parts{context, cls};
  Var tokens = tape.concat_rows(parts);
  Var pooled = tape.mean_rows(tokens);
  return run_layers(tape, pooled, deep_prompts, w);
}

Var encode_image(Tape& tape, Var x, std::span<const Var> deep_prompts,
                 const EncoderWeights& w) {
  const DenseArray& xv = x.value();
  if (xv.rank() != 1 || xv.size() != w.input_dim) {
    throw std::invalid_argument("encode_image: input width " +
                                std::to_string(xv.size()) + " != d_in " +
                                std::to_string(w.input_dim));
  }
  return run_layers(tape, x, deep_prompts, w);
}

FeatureVector encode_text_value(const DenseArray& context,
                                const DenseArray& class_emb,
                                std::span<const DenseArray> deep_prompts,
                                const EncoderWeights& w) {
  Tape tape;
  Var ctx = tape.constant(context);
  std::vector<Var> deep;
  deep.reserve(deep_prompts.size());
  for (const DenseArray& d : deep_prompts) deep.push_back(tape.constant(d));
  Var out = encode_text(tape, ctx, class_emb, deep, w);
  return FeatureVector(out.value().values);
}

FeatureVector encode_image_value(const DenseArray& x,
                                 std::span<const DenseArray> deep_prompts,
                                 const EncoderWeights& w) {
  Tape tape;
  Var xv = tape.constant(x);
  std::vector<Var> deep;
  deep.reserve(deep_prompts.size());
  for (const DenseArray& d : deep_prompts) deep.push_back(tape.constant(d));
  Var out = encode_image(tape, xv, deep, w);
  return FeatureVector(out.value().values);
}

std::vector<FeatureVector> handcrafted_features(const PromptBank& bank,
                                                const ClassEmbedding& cls,
                                                const EncoderWeights& w) {
  std::vector<FeatureVector> out;
  out.reserve(bank.size());
  for (const DenseArray& tmpl : bank.templates) {
    out.push_back(encode_text_value(tmpl, cls.embedding, {}, w));
  }
  return out;
}

FeatureVector compress_handcrafted(const std::vector<FeatureVector>& set) {
  if (set.empty()) {
    throw std::invalid_argument("compress_handcrafted: empty feature set");
  }
  std::vector<double> mean(set[0].size(), 0.0);
  for (const FeatureVector& f : set) {
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += f.v[i];
  }
  double inv = 1.0 / static_cast<double>(set.size());
  for (double& x : mean) x *= inv;
  if (l2_norm(mean) < 1e-12) {
    throw std::domain_error(
        "compress_handcrafted: degenerate bank, features average to zero");
  }
  return normalized_feature(std::move(mean));
}

const HandcraftedCache::Entry& HandcraftedCache::entry(
    const ClassEmbedding& cls) {
  auto it = cache_.find(cls.class_id);
  if (it == cache_.end()) {
    std::vector<FeatureVector> feats =
        handcrafted_features(*bank_, cls, *text_w_);
    FeatureVector comp = compress_handcrafted(feats);
    it = cache_.emplace(cls.class_id, Entry{std::move(feats), std::move(comp)})
             .first;
  }
  return it->second;
}

const std::vector<FeatureVector>& HandcraftedCache::features(
    const ClassEmbedding& cls) {
  return entry(cls).features;
}

const FeatureVector& HandcraftedCache::compressed(const ClassEmbedding& cls) {
  return entry(cls).compressed;
}

}  // namespace promptlab
