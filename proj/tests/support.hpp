#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "glab/autodiff.hpp"
#include "glab/corpus.hpp"
#include "glab/model.hpp"
#include "glab/rng.hpp"
#include "glab/synth.hpp"

namespace glab::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = scale * rng.normal();
  return t;
}

inline Corpus corpus_from_world(const SynthWorld& w) {
  Corpus c;
  c.records = w.records;
  c.features = w.features;
  c.feature_dim = w.features.cols();
  for (const auto& r : c.records) c.token_count += count_tokens(r.caption);
  return c;
}

inline Corpus tiny_corpus(std::uint64_t seed, std::size_t n_pairs = 64, std::size_t feature_dim = 8) {
  return corpus_from_world(synth_world(seed, n_pairs, 20, feature_dim));
}

struct Variant {
  std::string name;
  Regime regime;
  FusionStyle style;
};

// Every training regime / fusion combination the models support.
inline std::vector<Variant> all_variants() {
  return {{"language_only", Regime::FullCaption, FusionStyle::None},
          {"git", Regime::FullCaption, FusionStyle::GitPrefix},
          {"git_context", Regime::ContextWindow, FusionStyle::GitPrefix},
          {"clip_caption", Regime::FullCaption, FusionStyle::ClipContrastive},
          {"clip_word", Regime::SingleWord, FusionStyle::ClipContrastive},
          {"flamingo", Regime::FullCaption, FusionStyle::FlamingoXattn},
          {"word_only", Regime::WordOnly, FusionStyle::None}};
}

inline Model tiny_model(const Corpus& corpus, const Variant& v, std::uint64_t seed, std::size_t layers = 2,
                        std::size_t dim = 16) {
  Vocab vocab = Vocab::build(corpus.records, 1);
  TransformerConfig tc;
  tc.n_layers = layers;
  tc.hidden_dim = dim;
  tc.n_heads = 2;
  tc.ff_dim = 2 * dim;
  tc.vocab_size = vocab.size();
  tc.max_seq_len = 24;
  FusionConfig fc;
  fc.style = v.style;
  if (v.style != FusionStyle::None) fc.feature_dim = corpus.feature_dim;
  fc.n_latents = 3;
  fc.resampler_layers = 1;
  fc.visual_tokens = 2;
  return Model(tc, fc, std::move(vocab), v.regime, seed);
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t coordinates = 0;
};

// Central differences on up to `per_param` random coordinates of every
// parameter. The error for a parameter is ||analytic - numeric|| /
// (||analytic|| + ||numeric||) over its sampled coordinates.
inline GradCheck grad_check_model(Model& model, const std::vector<TrainingExample>& batch, const Tensor& features,
                                  Rng& rng, std::size_t per_param = 6, double h = 1e-5) {
  auto loss_value = [&] {
    Graph g;
    return training_loss(g, model, batch, features).value().item();
  };
  model.params().zero_grad();
  {
    Graph g;
    Var loss = training_loss(g, model, batch, features);
    g.backward(loss);
  }
  GradCheck out;
  for (auto& p : model.params()) {
    const std::size_t n = p->value.size();
    std::vector<std::size_t> coords;
    if (n <= per_param) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (std::size_t k = 0; k < per_param; ++k) coords.push_back(rng.index(n));
    }
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i : coords) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = loss_value();
      p->value[i] = orig - h;
      const double down = loss_value();
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad.empty() ? 0.0 : p->grad[i];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
      ++out.coordinates;
    }
    // Some gradients vanish identically (a key bias shifts every score of a
    // query equally), leaving only roundoff on both sides; compare those
    // absolutely.
    const double denom = std::sqrt(a2) + std::sqrt(n2);
    const double rel = denom < 1e-7 ? std::sqrt(diff2) : std::sqrt(diff2) / denom;
    if (rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst_param = p->name;
    }
  }
  return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("glab_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace glab::testing
