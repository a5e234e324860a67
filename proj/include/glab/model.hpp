#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "glab/autodiff.hpp"
#include "glab/corpus.hpp"
#include "glab/tensor.hpp"

namespace glab {

struct TransformerConfig {
  std::size_t n_layers = 6;
  std::size_t hidden_dim = 768;
  std::size_t n_heads = 12;
  std::size_t ff_dim = 3072;
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = 64;
  bool tie_embeddings = true;

  void validate() const;
  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

// Desk-scale default: 2 layers, dim 128, 4 heads, ff 512.
TransformerConfig desk_transformer_config(std::size_t vocab_size);

enum class FusionStyle { None, GitPrefix, ClipContrastive, FlamingoXattn };

std::string fusion_style_name(FusionStyle s);
FusionStyle parse_fusion_style(std::string_view name);

struct FusionConfig {
  FusionStyle style = FusionStyle::None;
  std::size_t feature_dim = 0;
  // Flamingo only.
  std::size_t n_latents = 64;
  std::size_t resampler_layers = 2;
  std::size_t xattn_every = 1;
  // Flamingo: the feature vector is read as visual_tokens x (feature_dim / visual_tokens).
  std::size_t visual_tokens = 1;

  // True for styles whose forward pass reads a feature vector (GIT, Flamingo);
  // CLIP only sees features in its loss.
  bool consumes_features() const noexcept {
    return style == FusionStyle::GitPrefix || style == FusionStyle::FlamingoXattn;
  }
  void validate() const;
  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

// Trainable state of one model: configs, parameters, vocabulary and the
// training regime it was (or will be) trained with.
class Model {
 public:
  Model(TransformerConfig config, FusionConfig fusion, Vocab vocab, Regime regime, std::uint64_t seed);

  const TransformerConfig& config() const noexcept { return config_; }
  const FusionConfig& fusion() const noexcept { return fusion_; }
  const Vocab& vocab() const noexcept { return vocab_; }
  Regime regime() const noexcept { return regime_; }
  std::int64_t step() const noexcept { return step_; }
  void set_step(std::int64_t s) noexcept { step_ = s; }

  ParameterSet& params() noexcept { return params_; }
  const ParameterSet& params() const noexcept { return params_; }
  // The output projection; with tied embeddings this is the token embedding itself.
  const Parameter& output_weight() const;
  const Parameter& token_embedding() const;

  // Mean image feature per vocabulary id (rows of zeros for unseen tokens);
  // set after CLIP training and used by the context-matching proxy.
  const std::optional<Tensor>& word_features() const noexcept { return word_features_; }
  void set_word_features(Tensor t) { word_features_ = std::move(t); }

  bool is_clip() const noexcept { return fusion_.style == FusionStyle::ClipContrastive; }
  std::size_t feature_dim() const noexcept { return fusion_.feature_dim; }

 private:
  friend Model load_checkpoint(const std::filesystem::path&);

  TransformerConfig config_;
  FusionConfig fusion_;
  Vocab vocab_;
  Regime regime_;
  ParameterSet params_;
  std::int64_t step_ = 0;
  std::optional<Tensor> word_features_;
};

struct ForwardResult {
  Tensor logits;               // positions x vocab_size
  std::vector<Tensor> hidden;  // n_layers + 1 entries, each positions x hidden_dim
};

// `tokens` is the full input sequence (callers include [BOS]); `fvec` is one
// feature vector, required iff the fusion style consumes one.
ForwardResult forward_lm(const Model& model, const std::vector<int>& tokens, const Tensor* fvec = nullptr);

// Differentiable batch forward used by the losses. `seqs` are right-padded to
// equal length with [PAD]; `features` is batch x feature_dim or null.
struct BatchForward {
  Var logits;               // (batch * len) x vocab
  std::vector<Var> hidden;  // n_layers + 1 entries, (batch * len) x hidden_dim
  std::size_t batch = 0;
  std::size_t len = 0;
};
BatchForward forward_batch(Graph& g, Model& model, const std::vector<std::vector<int>>& seqs,
                           const Tensor* features);

// Mean next-token cross-entropy over the batch. Regular regimes read
// [BOS] + tokens and predict each token; word_only reads [CLS] w and predicts w.
Var loss_next_token(Graph& g, Model& model, const std::vector<TrainingExample>& batch, const Tensor& features);

// Symmetric InfoNCE over the batch. `temperature` overrides the learned logit scale.
Var loss_clip(Graph& g, Model& model, const std::vector<TrainingExample>& batch, const Tensor& features,
              std::optional<double> temperature = std::nullopt);
// InfoNCE over unit-norm text and image rows with similarity scale `scale`.
Var infonce(Var text_unit, Var image_unit, Var scale);

// CLIP text embedding (unit norm) of an un-prefixed token sequence.
Tensor clip_text_embedding(const Model& model, const std::vector<int>& tokens);

// The loss matching the model's style and regime.
Var training_loss(Graph& g, Model& model, const std::vector<TrainingExample>& batch, const Tensor& features);

// tokens x hidden_dim visual tokens (already projected) -> n_latents x hidden_dim.
Tensor perceiver_resample(const Model& model, const Tensor& visual_tokens);

struct WordReps {
  std::vector<Tensor> layers;  // n_layers + 1 vectors of hidden_dim (1 x hidden_dim)
  bool has_unk = false;
};
// [BOS] + word tokens in isolation; hidden state at the last word token.
// Fused styles see the zero feature vector.
WordReps extract_word_reps(const Model& model, const std::string& word, const Vocab& vocab);
// Per-layer hidden state at the last token of a sentence, same conventions.
WordReps extract_sentence_reps(const Model& model, const std::string& sentence, const Vocab& vocab);

// Sum of log-probabilities of tokens[1..] given their prefixes. Requires at
// least 2 tokens; CLIP models raise CapabilityError.
double sequence_logprob(const Model& model, const std::vector<int>& tokens, const Tensor* fvec = nullptr);

// LGCKPT1 container: magic line, JSON config block, then named FVEC tensors.
inline constexpr char kCheckpointTag[] = "LGCKPT1";
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace glab
