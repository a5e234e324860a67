#include "glab/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "glab/error.hpp"
#include "glab/fvec.hpp"
#include "glab/rng.hpp"

namespace glab {

// ---------------------------------------------------------------------------
// Configs

void TransformerConfig::validate() const {
  if (n_layers < 1) throw ContractError("transformer: n_layers must be >= 1");
  if (hidden_dim < 1 || n_heads < 1 || ff_dim < 1) throw ContractError("transformer: dimensions must be positive");
  if (hidden_dim % n_heads != 0) {
    throw ContractError("transformer: hidden_dim " + std::to_string(hidden_dim) + " not divisible by n_heads " +
                        std::to_string(n_heads));
  }
  if (max_seq_len < 2) throw ContractError("transformer: max_seq_len must be >= 2");
  if (vocab_size < 1) throw ContractError("transformer: vocab_size must be >= 1");
}

TransformerConfig desk_transformer_config(std::size_t vocab_size) {
  TransformerConfig c;
  c.n_layers = 2;
  c.hidden_dim = 128;
  c.n_heads = 4;
  c.ff_dim = 512;
  c.vocab_size = vocab_size;
  return c;
}

std::string fusion_style_name(FusionStyle s) {
  switch (s) {
    case FusionStyle::None: return "none";
    case FusionStyle::GitPrefix: return "git_prefix";
    case FusionStyle::ClipContrastive: return "clip_contrastive";
    case FusionStyle::FlamingoXattn: return "flamingo_xattn";
  }
  return "?";
}

FusionStyle parse_fusion_style(std::string_view name) {
  if (name == "none") return FusionStyle::None;
  if (name == "git_prefix") return FusionStyle::GitPrefix;
  if (name == "clip_contrastive") return FusionStyle::ClipContrastive;
  if (name == "flamingo_xattn") return FusionStyle::FlamingoXattn;
  throw ContractError("unknown fusion style '" + std::string(name) + "'");
}

void FusionConfig::validate() const {
  if (style == FusionStyle::None) return;
  if (feature_dim < 1) throw ContractError("fusion: feature_dim must be >= 1 for style " + fusion_style_name(style));
  if (style != FusionStyle::FlamingoXattn) return;
  if (n_latents < 1) throw ContractError("fusion: flamingo needs at least one latent");
  if (xattn_every < 1) throw ContractError("fusion: xattn_every must be >= 1");
  if (visual_tokens < 1 || feature_dim % visual_tokens != 0) {
    throw ContractError("fusion: feature_dim " + std::to_string(feature_dim) + " not divisible by visual_tokens " +
                        std::to_string(visual_tokens));
  }
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

void add_linear(ParameterSet& ps, Rng& rng, const std::string& name, std::size_t in, std::size_t out,
                bool bias = true) {
  ps.add(name + ".w", xavier_uniform(in, out, rng));
  if (bias) ps.add(name + ".b", Tensor(Shape{1, out}));
}

void add_norm(ParameterSet& ps, const std::string& name, std::size_t d) {
  ps.add(name + ".g", Tensor(Shape{1, d}, 1.0));
  ps.add(name + ".b", Tensor(Shape{1, d}));
}

void add_attention(ParameterSet& ps, Rng& rng, const std::string& name, std::size_t d) {
  for (const char* p : {".q", ".k", ".v", ".o"}) add_linear(ps, rng, name + p, d, d);
}

void add_ff(ParameterSet& ps, Rng& rng, const std::string& name, std::size_t d, std::size_t ff) {
  add_linear(ps, rng, name + ".in", d, ff);
  add_linear(ps, rng, name + ".out", ff, d);
}

std::string layer_name(const char* prefix, std::size_t i) { return prefix + std::to_string(i); }

bool has_xattn_after(const FusionConfig& f, std::size_t layer) {
  return f.style == FusionStyle::FlamingoXattn && (layer + 1) % f.xattn_every == 0;
}

}  // namespace

Model::Model(TransformerConfig config, FusionConfig fusion, Vocab vocab, Regime regime, std::uint64_t seed)
    : config_(config), fusion_(fusion), vocab_(std::move(vocab)), regime_(regime) {
  if (config_.vocab_size == 0) config_.vocab_size = vocab_.size();
  if (config_.vocab_size != vocab_.size()) {
    throw ContractError("model: vocab_size " + std::to_string(config_.vocab_size) + " does not match vocabulary of " +
                        std::to_string(vocab_.size()) + " tokens");
  }
  config_.validate();
  fusion_.validate();
  if (regime_ == Regime::WordOnly && fusion_.style != FusionStyle::None) {
    throw ContractError("model: word_only regime takes no visual input");
  }

  Rng rng = Rng::stream(seed, "init");
  const std::size_t d = config_.hidden_dim;
  params_.add("tok_emb", xavier_uniform(config_.vocab_size, d, rng));
  params_.add("pos_emb", xavier_uniform(config_.max_seq_len, d, rng));
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string h = layer_name("h", l);
    add_norm(params_, h + ".ln1", d);
    add_attention(params_, rng, h + ".attn", d);
    add_norm(params_, h + ".ln2", d);
    add_ff(params_, rng, h + ".ff", d, config_.ff_dim);
  }
  add_norm(params_, "ln_f", d);
  if (!config_.tie_embeddings) params_.add("out.w", xavier_uniform(config_.vocab_size, d, rng));

  switch (fusion_.style) {
    case FusionStyle::None: break;
    case FusionStyle::GitPrefix: add_linear(params_, rng, "git.proj", fusion_.feature_dim, d); break;
    case FusionStyle::ClipContrastive:
      add_linear(params_, rng, "clip.proj", d, fusion_.feature_dim, false);
      params_.add("clip.log_scale", Tensor(Shape{1, 1}, std::log(1.0 / 0.07)));
      break;
    case FusionStyle::FlamingoXattn: {
      add_linear(params_, rng, "flm.vis", fusion_.feature_dim / fusion_.visual_tokens, d);
      params_.add("flm.latents", xavier_uniform(fusion_.n_latents, d, rng));
      for (std::size_t r = 0; r < fusion_.resampler_layers; ++r) {
        const std::string p = layer_name("flm.r", r);
        add_norm(params_, p + ".ln_media", d);
        add_norm(params_, p + ".ln_latents", d);
        add_attention(params_, rng, p + ".attn", d);
        add_norm(params_, p + ".ln_ff", d);
        add_ff(params_, rng, p + ".ff", d, config_.ff_dim);
      }
      add_norm(params_, "flm.r_out", d);
      for (std::size_t l = 0; l < config_.n_layers; ++l) {
        if (!has_xattn_after(fusion_, l)) continue;
        const std::string p = layer_name("flm.x", l);
        add_norm(params_, p + ".ln", d);
        add_attention(params_, rng, p + ".attn", d);
        params_.add(p + ".gate_attn", Tensor(Shape{1, 1}));
        add_norm(params_, p + ".ln_ff", d);
        add_ff(params_, rng, p + ".ff", d, config_.ff_dim);
        params_.add(p + ".gate_ff", Tensor(Shape{1, 1}));
      }
      break;
    }
  }
}

const Parameter& Model::token_embedding() const { return params_.get("tok_emb"); }

const Parameter& Model::output_weight() const {
  return config_.tie_embeddings ? params_.get("tok_emb") : params_.get("out.w");
}

// ---------------------------------------------------------------------------
// Forward

namespace {

struct Ctx {
  Graph& g;
  Model& m;

  Var p(const std::string& name) { return g.param(m.params().get(name)); }
  Var linear(Var x, const std::string& name) {
    Var y = matmul(x, p(name + ".w"));
    if (m.params().find(name + ".b")) y = y + p(name + ".b");
    return y;
  }
  Var norm(Var x, const std::string& name) { return layer_norm(x, p(name + ".g"), p(name + ".b")); }
  Var ff(Var x, const std::string& name) { return linear(gelu(linear(x, name + ".in")), name + ".out"); }
  Var mha(Var xq, Var xkv, const std::string& name, AttentionSpec spec) {
    spec.heads = m.config().n_heads;
    Var a = attention(linear(xq, name + ".q"), linear(xkv, name + ".k"), linear(xkv, name + ".v"), spec);
    return linear(a, name + ".o");
  }
};

// Latent array attending to [media; latents] for each resampler layer.
Var resample(Ctx& c, Var media, std::size_t batch, std::size_t media_len) {
  const FusionConfig& f = c.m.fusion();
  const std::size_t nl = f.n_latents;
  std::vector<std::size_t> tile(batch * nl);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < nl; ++j) tile[b * nl + j] = j;
  Var lat = gather_rows(c.p("flm.latents"), tile);
  std::vector<std::size_t> kv_order;
  kv_order.reserve(batch * (media_len + nl));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < media_len; ++i) kv_order.push_back(b * media_len + i);
    for (std::size_t j = 0; j < nl; ++j) kv_order.push_back(batch * media_len + b * nl + j);
  }
  for (std::size_t r = 0; r < f.resampler_layers; ++r) {
    const std::string p = layer_name("flm.r", r);
    Var mn = c.norm(media, p + ".ln_media");
    Var ln = c.norm(lat, p + ".ln_latents");
    Var kv = gather_rows(concat_rows(mn, ln), kv_order);
    lat = lat + c.mha(ln, kv, p + ".attn", AttentionSpec{batch, nl, media_len + nl, 1, false});
    lat = lat + c.ff(c.norm(lat, p + ".ln_ff"), p + ".ff");
  }
  return c.norm(lat, "flm.r_out");
}

Var media_tokens(Ctx& c, const Tensor& features) {
  const FusionConfig& f = c.m.fusion();
  const std::size_t batch = features.rows();
  Tensor flat = features.reshaped(Shape{batch * f.visual_tokens, f.feature_dim / f.visual_tokens});
  return c.linear(c.g.constant(std::move(flat)), "flm.vis");
}

Tensor as_feature_batch(const Tensor& fvec, std::size_t dim) {
  if (fvec.size() != dim) {
    throw ShapeError("feature vector has " + std::to_string(fvec.size()) + " values, model expects " +
                     std::to_string(dim));
  }
  return fvec.reshaped(Shape{1, dim});
}

}  // namespace

BatchForward forward_batch(Graph& g, Model& model, const std::vector<std::vector<int>>& seqs, const Tensor* features) {
  const TransformerConfig& cfg = model.config();
  const FusionConfig& fus = model.fusion();
  if (seqs.empty()) throw ContractError("forward: empty batch");
  const std::size_t B = seqs.size(), T = seqs[0].size();
  if (T == 0) throw ContractError("forward: empty sequence");
  if (T > cfg.max_seq_len) {
    throw ContractError("forward: sequence length " + std::to_string(T) + " exceeds max_seq_len " +
                        std::to_string(cfg.max_seq_len));
  }
  if (fus.consumes_features()) {
    if (!features) throw ContractError("forward: style " + fusion_style_name(fus.style) + " needs a feature vector");
    if (features->rows() != B || features->cols() != fus.feature_dim) {
      throw ShapeError("forward: features " + shape_string(features->shape()) + " do not match batch " +
                       std::to_string(B) + " x feature_dim " + std::to_string(fus.feature_dim));
    }
  } else if (features) {
    throw ContractError("forward: style " + fusion_style_name(fus.style) + " takes no feature vector");
  }

  std::vector<int> ids, pos;
  ids.reserve(B * T);
  pos.reserve(B * T);
  for (const auto& s : seqs) {
    if (s.size() != T) throw ContractError("forward: batch sequences must be padded to equal length");
    for (std::size_t t = 0; t < T; ++t) {
      if (s[t] < 0 || static_cast<std::size_t>(s[t]) >= cfg.vocab_size) {
        throw ContractError("forward: token id " + std::to_string(s[t]) + " outside vocabulary");
      }
      ids.push_back(s[t]);
      pos.push_back(static_cast<int>(t));
    }
  }

  Ctx c{g, model};
  Var x = embedding(c.p("tok_emb"), ids) + embedding(c.p("pos_emb"), pos);
  std::size_t L = T;
  std::vector<std::size_t> text_rows;
  if (fus.style == FusionStyle::GitPrefix) {
    // One prefix pseudo-token per example, no positional embedding.
    Var prefix = c.linear(g.constant(*features), "git.proj");
    std::vector<std::size_t> order;
    order.reserve(B * (T + 1));
    for (std::size_t b = 0; b < B; ++b) {
      order.push_back(B * T + b);
      for (std::size_t t = 0; t < T; ++t) order.push_back(b * T + t);
    }
    x = gather_rows(concat_rows(x, prefix), order);
    L = T + 1;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t) text_rows.push_back(b * L + 1 + t);
  }
  auto text = [&](Var h) { return text_rows.empty() ? h : gather_rows(h, text_rows); };

  std::optional<Var> latents;
  if (fus.style == FusionStyle::FlamingoXattn) latents = resample(c, media_tokens(c, *features), B, fus.visual_tokens);

  BatchForward out;
  out.batch = B;
  out.len = T;
  out.hidden.push_back(text(x));
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string h = layer_name("h", l);
    Var n1 = c.norm(x, h + ".ln1");
    x = x + c.mha(n1, n1, h + ".attn", AttentionSpec{B, L, L, 1, true});
    x = x + c.ff(c.norm(x, h + ".ln2"), h + ".ff");
    if (latents && has_xattn_after(fus, l)) {
      const std::string p = layer_name("flm.x", l);
      Var a = c.mha(c.norm(x, p + ".ln"), *latents, p + ".attn", AttentionSpec{B, L, fus.n_latents, 1, false});
      x = x + mul(a, tanh(c.p(p + ".gate_attn")));
      x = x + mul(c.ff(c.norm(x, p + ".ln_ff"), p + ".ff"), tanh(c.p(p + ".gate_ff")));
    }
    out.hidden.push_back(text(x));
  }
  Var final_h = text(c.norm(x, "ln_f"));
  out.hidden.back() = final_h;
  out.logits = matmul_nt(final_h, g.param(const_cast<Parameter&>(model.output_weight())));
  return out;
}

namespace {

// Inference graphs never write to parameters, so reading a const Model
// through the mutable graph interface is safe.
Model& unconst(const Model& m) { return const_cast<Model&>(m); }

std::optional<Tensor> feature_batch_for(const Model& model, const Tensor* fvec) {
  if (!fvec) return std::nullopt;
  return as_feature_batch(*fvec, model.feature_dim());
}

}  // namespace

ForwardResult forward_lm(const Model& model, const std::vector<int>& tokens, const Tensor* fvec) {
  Graph g(false);
  const auto feats = feature_batch_for(model, fvec);
  BatchForward bf = forward_batch(g, unconst(model), {tokens}, feats ? &*feats : nullptr);
  ForwardResult r;
  r.logits = bf.logits.value();
  for (Var h : bf.hidden) r.hidden.push_back(h.value());
  return r;
}

// ---------------------------------------------------------------------------
// Losses

namespace {

std::vector<int> input_sequence(const TrainingExample& ex) {
  if (ex.regime == Regime::WordOnly) return ex.tokens;
  std::vector<int> s{Vocab::kBos};
  s.insert(s.end(), ex.tokens.begin(), ex.tokens.end());
  return s;
}

std::vector<std::vector<int>> padded(const std::vector<TrainingExample>& batch, std::vector<std::size_t>& lengths) {
  std::vector<std::vector<int>> seqs;
  std::size_t T = 0;
  for (const auto& ex : batch) {
    seqs.push_back(input_sequence(ex));
    lengths.push_back(seqs.back().size());
    T = std::max(T, seqs.back().size());
  }
  for (auto& s : seqs) s.resize(T, Vocab::kPad);
  return seqs;
}

Tensor gather_features(const std::vector<TrainingExample>& batch, const Tensor& features, std::size_t dim,
                       const char* op) {
  Tensor out(Shape{batch.size(), dim});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch[i].feature_row) throw ContractError(std::string(op) + ": example " + std::to_string(i) + " has no image");
    const std::size_t r = *batch[i].feature_row;
    if (r >= features.rows() || features.cols() != dim) {
      throw ShapeError(std::string(op) + ": feature row " + std::to_string(r) + " unavailable in features " +
                       shape_string(features.shape()));
    }
    std::copy_n(features.row(r).data(), dim, out.row(i).data());
  }
  return out;
}

}  // namespace

Var loss_next_token(Graph& g, Model& model, const std::vector<TrainingExample>& batch, const Tensor& features) {
  if (batch.empty()) throw ContractError("loss_next_token: empty batch");
  if (model.is_clip()) throw ContractError("loss_next_token: CLIP-style models train with loss_clip");
  std::vector<std::size_t> lengths;
  const auto seqs = padded(batch, lengths);
  const std::size_t T = seqs[0].size();
  std::vector<int> targets(batch.size() * T, -1);
  std::size_t live = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    // word_only: only the word after [CLS] is predicted.
    const std::size_t last = batch[b].regime == Regime::WordOnly ? std::min<std::size_t>(lengths[b], 2) : lengths[b];
    for (std::size_t t = 0; t + 1 < last; ++t, ++live) targets[b * T + t] = seqs[b][t + 1];
  }
  if (live == 0) throw ContractError("loss_next_token: every position in the batch is masked");
  std::optional<Tensor> feats;
  if (model.fusion().consumes_features()) feats = gather_features(batch, features, model.feature_dim(), "loss_next_token");
  BatchForward bf = forward_batch(g, model, seqs, feats ? &*feats : nullptr);
  return cross_entropy(bf.logits, targets);
}

Var infonce(Var text_unit, Var image_unit, Var scale_var) {
  const std::size_t n = text_unit.value().rows();
  Var logits = mul(matmul_nt(text_unit, image_unit), scale_var);
  std::vector<int> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = static_cast<int>(i);
  return scale(cross_entropy(logits, diag) + cross_entropy(transpose(logits), diag), 0.5);
}

namespace {

Var clip_scale(Graph& g, Ctx& c, std::optional<double> temperature) {
  if (temperature) {
    if (!(*temperature > 0.0)) throw ContractError("loss_clip: temperature must be positive");
    return g.constant(Tensor(Shape{1, 1}, 1.0 / *temperature));
  }
  return clamp_max(exp(c.p("clip.log_scale")), 100.0);
}

Var normalized(Var x, const char* what, const std::vector<TrainingExample>* batch) {
  try {
    return l2_normalize_rows(x);
  } catch (const NumericError& e) {
    std::string msg = std::string("loss_clip: zero-norm ") + what + " embedding (" + e.what() + ")";
    if (batch) {
      std::string s = e.what();
      auto pos = s.find("row ");
      if (pos != std::string::npos) {
        const std::size_t i = std::stoul(s.substr(pos + 4));
        if (i < batch->size() && (*batch)[i].feature_row)
          msg += " for record at feature row " + std::to_string(*(*batch)[i].feature_row);
      }
    }
    throw NumericError(msg);
  }
}

Var clip_text(Ctx& c, const std::vector<std::vector<int>>& seqs, const std::vector<std::size_t>& lengths) {
  BatchForward bf = forward_batch(c.g, c.m, seqs, nullptr);
  std::vector<std::size_t> last(seqs.size());
  for (std::size_t b = 0; b < seqs.size(); ++b) last[b] = b * bf.len + lengths[b] - 1;
  return matmul(gather_rows(bf.hidden.back(), last), c.p("clip.proj.w"));
}

}  // namespace

Var loss_clip(Graph& g, Model& model, const std::vector<TrainingExample>& batch, const Tensor& features,
              std::optional<double> temperature) {
  if (batch.empty()) throw ContractError("loss_clip: batch must hold at least one pair");
  if (!model.is_clip()) throw ContractError("loss_clip: model is not CLIP-style");
  std::vector<std::size_t> lengths;
  const auto seqs = padded(batch, lengths);
  Ctx c{g, model};
  Tensor img = gather_features(batch, features, model.feature_dim(), "loss_clip");
  Var text_unit = normalized(clip_text(c, seqs, lengths), "text", &batch);
  Var image_unit = normalized(g.constant(std::move(img)), "image", &batch);
  return infonce(text_unit, image_unit, clip_scale(g, c, temperature));
}

Tensor clip_text_embedding(const Model& model, const std::vector<int>& tokens) {
  if (!model.is_clip()) throw ContractError("clip_text_embedding: model is not CLIP-style");
  Graph g(false);
  Ctx c{g, unconst(model)};
  std::vector<int> s{Vocab::kBos};
  s.insert(s.end(), tokens.begin(), tokens.end());
  return l2_normalize_rows(clip_text(c, {s}, {s.size()})).value();
}

Var training_loss(Graph& g, Model& model, const std::vector<TrainingExample>& batch, const Tensor& features) {
  return model.is_clip() ? loss_clip(g, model, batch, features) : loss_next_token(g, model, batch, features);
}

Tensor perceiver_resample(const Model& model, const Tensor& visual_tokens) {
  if (model.fusion().style != FusionStyle::FlamingoXattn) {
    throw ContractError("perceiver_resample: model is not flamingo-style");
  }
  if (visual_tokens.rank() != 2 || visual_tokens.rows() == 0) {
    throw ContractError("perceiver_resample: empty feature sequence");
  }
  if (visual_tokens.cols() != model.config().hidden_dim) {
    throw ShapeError("perceiver_resample: tokens " + shape_string(visual_tokens.shape()) + " do not have hidden_dim " +
                     std::to_string(model.config().hidden_dim) + " columns");
  }
  Graph g(false);
  Ctx c{g, unconst(model)};
  return resample(c, g.constant(visual_tokens), 1, visual_tokens.rows()).value();
}

// ---------------------------------------------------------------------------
// Representations and scoring

namespace {

WordReps last_token_reps(const Model& model, const std::vector<int>& ids) {
  WordReps reps;
  for (int id : ids) reps.has_unk |= id == Vocab::kUnk;
  std::vector<int> seq{Vocab::kBos};
  seq.insert(seq.end(), ids.begin(), ids.end());
  if (seq.size() > model.config().max_seq_len) seq.resize(model.config().max_seq_len);
  std::optional<Tensor> zero;
  if (model.fusion().consumes_features()) zero = Tensor(Shape{1, model.feature_dim()});
  const ForwardResult r = forward_lm(model, seq, zero ? &*zero : nullptr);
  const std::size_t last = seq.size() - 1;
  for (const Tensor& h : r.hidden) {
    auto row = h.row(last);
    reps.layers.emplace_back(Shape{1, h.cols()}, std::vector<double>(row.begin(), row.end()));
  }
  return reps;
}

}  // namespace

WordReps extract_word_reps(const Model& model, const std::string& word, const Vocab& vocab) {
  const auto ids = vocab.encode(word);
  if (ids.empty()) throw ContractError("extract_word_reps: '" + word + "' has no tokens");
  return last_token_reps(model, ids);
}

WordReps extract_sentence_reps(const Model& model, const std::string& sentence, const Vocab& vocab) {
  const auto ids = vocab.encode(sentence);
  if (ids.empty()) throw ContractError("extract_sentence_reps: sentence has no tokens");
  return last_token_reps(model, ids);
}

double sequence_logprob(const Model& model, const std::vector<int>& tokens, const Tensor* fvec) {
  if (model.is_clip()) {
    throw CapabilityError(
        "sequence_logprob: CLIP-style models define no next-token distribution; use the embedding-matching proxy");
  }
  if (tokens.size() < 2) throw ContractError("sequence_logprob: need at least 2 tokens");
  const ForwardResult r = forward_lm(model, tokens, fvec);
  double total = 0.0;
  const std::size_t V = r.logits.cols();
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
    auto row = r.logits.row(t);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : row) mx = std::max(mx, v);
    double z = 0.0;
    for (std::size_t k = 0; k < V; ++k) z += std::exp(row[k] - mx);
    total += row[static_cast<std::size_t>(tokens[t + 1])] - mx - std::log(z);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

nlohmann::ordered_json config_json(const Model& m) {
  const auto& c = m.config();
  const auto& f = m.fusion();
  nlohmann::ordered_json j;
  j["transformer"] = {{"n_layers", c.n_layers},     {"hidden_dim", c.hidden_dim},   {"n_heads", c.n_heads},
                      {"ff_dim", c.ff_dim},         {"vocab_size", c.vocab_size},   {"max_seq_len", c.max_seq_len},
                      {"tie_embeddings", c.tie_embeddings}};
  j["fusion"] = {{"style", fusion_style_name(f.style)}, {"feature_dim", f.feature_dim},
                 {"n_latents", f.n_latents},            {"resampler_layers", f.resampler_layers},
                 {"xattn_every", f.xattn_every},        {"visual_tokens", f.visual_tokens}};
  j["regime"] = regime_name(m.regime());
  j["step"] = m.step();
  j["vocab"] = m.vocab().tokens();
  nlohmann::ordered_json names = nlohmann::ordered_json::array();
  for (const auto& p : m.params()) names.push_back(p->name);
  j["params"] = names;
  j["word_features"] = m.word_features().has_value();
  return j;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot open " + path.string() + " for writing");
  const std::string header = config_json(model).dump();
  out << kCheckpointTag << '\n' << header.size() << '\n' << header;
  for (const auto& p : model.params()) write_fvec(out, p->value);
  if (model.word_features()) write_fvec(out, *model.word_features());
  if (!out) throw LoadError("write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::string tag;
  std::getline(in, tag);
  if (tag != kCheckpointTag) {
    throw LoadError(path.string() + ": not a checkpoint (expected tag " + std::string(kCheckpointTag) + ")");
  }
  std::size_t len = 0;
  std::string len_line;
  std::getline(in, len_line);
  try {
    len = std::stoul(len_line);
  } catch (const std::exception&) {
    throw LoadError(path.string() + ": malformed " + std::string(kCheckpointTag) + " header");
  }
  std::string header(len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(len))) {
    throw LoadError(path.string() + ": truncated " + std::string(kCheckpointTag) + " header");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
    TransformerConfig c;
    const auto& t = j.at("transformer");
    c.n_layers = t.at("n_layers");
    c.hidden_dim = t.at("hidden_dim");
    c.n_heads = t.at("n_heads");
    c.ff_dim = t.at("ff_dim");
    c.vocab_size = t.at("vocab_size");
    c.max_seq_len = t.at("max_seq_len");
    c.tie_embeddings = t.at("tie_embeddings");
    FusionConfig f;
    const auto& fj = j.at("fusion");
    f.style = parse_fusion_style(fj.at("style").get<std::string>());
    f.feature_dim = fj.at("feature_dim");
    f.n_latents = fj.at("n_latents");
    f.resampler_layers = fj.at("resampler_layers");
    f.xattn_every = fj.at("xattn_every");
    f.visual_tokens = fj.at("visual_tokens");
    Model m(c, f, Vocab::from_tokens(j.at("vocab").get<std::vector<std::string>>()),
            parse_regime(j.at("regime").get<std::string>()), 0);
    m.step_ = j.at("step");
    const auto names = j.at("params").get<std::vector<std::string>>();
    if (names.size() != m.params().size()) throw LoadError(path.string() + ": parameter count mismatch");
    for (const auto& name : names) {
      Parameter* p = m.params().find(name);
      if (!p) throw LoadError(path.string() + ": unexpected parameter '" + name + "'");
      Tensor v = read_fvec(in, path.string() + ":" + name);
      if (v.size() != p->value.size()) {
        throw LoadError(path.string() + ": parameter '" + name + "' has " + std::to_string(v.size()) +
                        " values, expected " + std::to_string(p->value.size()));
      }
      p->value = v.reshaped(p->value.shape());
    }
    if (j.at("word_features").get<bool>()) m.word_features_ = read_fvec(in, path.string() + ":word_features");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": bad " + std::string(kCheckpointTag) + " config block (" + e.what() + ")");
  } catch (const ContractError& e) {
    throw LoadError(path.string() + ": invalid config (" + e.what() + ")");
  }
}

}  // namespace glab
