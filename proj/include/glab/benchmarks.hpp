#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "glab/model.hpp"
#include "glab/probes.hpp"
#include "glab/tensor.hpp"

namespace glab {

// ---------------------------------------------------------------------------
// Datasets

struct RelatednessPair {
  std::string w1, w2;
  double score = 0.0;
  std::string category;  // optional tag, empty when absent
};
struct RelatednessSet {
  std::vector<RelatednessPair> pairs;
};
RelatednessSet parse_relatedness(std::istream& in, const std::string& source);
RelatednessSet load_relatedness(const std::filesystem::path& path);

enum class RelationLabel { Synonym, Antonym, Hypernym, Meronym, Random };
inline constexpr std::size_t kNumRelationLabels = 5;
std::string relation_label_name(RelationLabel l);
// Accepts the long names and the CogALex tags (SYN, ANT, HYPER, PART_OF, RANDOM).
RelationLabel parse_relation_label(std::string_view s);

struct RelationPair {
  std::string w1, w2;
  RelationLabel label = RelationLabel::Random;
  bool train = true;
};
struct RelationSet {
  std::vector<RelationPair> pairs;
};
RelationSet parse_relations(std::istream& in, const std::string& source);
RelationSet load_relations(const std::filesystem::path& path);

struct FeatureNormSet {
  std::vector<std::string> features;  // global inventory, first-seen order
  // word -> (feature index, strength), insertion order preserved by `words`.
  std::vector<std::string> words;
  std::map<std::string, std::vector<std::pair<std::size_t, double>>> norms;
};
FeatureNormSet parse_feature_norms(std::istream& in, const std::string& source);
FeatureNormSet load_feature_norms(const std::filesystem::path& path);

struct PosSet {
  std::vector<std::pair<std::string, std::string>> entries;  // word, tag
};
PosSet parse_pos(std::istream& in, const std::string& source);
PosSet load_pos(const std::filesystem::path& path);

struct SentencePair {
  std::string target, distractor, original, modified, pos;
};
struct SentencePairSet {
  std::vector<SentencePair> pairs;
};
SentencePairSet parse_sentence_pairs(std::istream& in, const std::string& source);
SentencePairSet load_sentence_pairs(const std::filesystem::path& path);
void write_sentence_pairs(const std::filesystem::path& path, const SentencePairSet& set);

struct ResponseSet {
  std::vector<std::string> passages;   // passage id per sentence
  std::vector<std::string> sentences;
  Tensor responses;                    // sentences x voxels
  std::vector<double> ceilings;        // per voxel, > 0
};
ResponseSet load_response_set(const std::filesystem::path& sentences_tsv, const std::filesystem::path& responses_fvec,
                              const std::filesystem::path& ceilings_tsv);

// word -> age of acquisition.
std::map<std::string, double> load_aoa(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Representations

struct RepTable {
  std::size_t n_layers = 0;  // entries per word
  std::map<std::string, std::vector<Tensor>> reps;
  std::set<std::string> unk_words;  // words whose tokens include [UNK]

  bool contains(const std::string& w) const { return reps.count(w) > 0; }
  // rows = words, one matrix for `layer`.
  Tensor layer_matrix(const std::vector<std::string>& words, std::size_t layer) const;
};

// Isolated-word extraction for every distinct word; [UNK] words are recorded
// in unk_words and left out of `reps`.
RepTable extract_rep_table(const Model& model, const std::vector<std::string>& words);

// Per-layer sentence matrices (sentences x hidden_dim), last-token states.
std::vector<Tensor> sentence_layer_matrices(const Model& model, const std::vector<std::string>& sentences);

// ---------------------------------------------------------------------------
// Reports

inline constexpr char kReportSchema[] = "LGREP1";

struct LayerScore {
  std::size_t layer = 0;
  std::optional<double> score;       // test-side score
  std::optional<double> validation;  // selection criterion when distinct from score
  std::string error;                 // non-empty when the layer could not be scored
};

struct EvalReport {
  std::string benchmark;
  std::vector<LayerScore> per_layer;
  std::size_t selected_layer = 0;
  std::string selection_criterion;
  std::vector<std::uint64_t> split_seeds;
  double final_score = 0.0;
  std::string config_fingerprint;
  nlohmann::ordered_json details = nlohmann::ordered_json::object();
  std::vector<std::string> warnings;
};

nlohmann::ordered_json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
void write_report(const std::filesystem::path& path, const EvalReport& r);
EvalReport read_report(const std::filesystem::path& path);

// Recomputes the final score from the stored trace; throws if it disagrees.
void audit_report(const EvalReport& r);

// Split membership is a function of (benchmark id, seed) only.
std::uint64_t split_seed(const std::string& benchmark, std::uint64_t seed, std::size_t split_index);

// ---------------------------------------------------------------------------
// Benchmarks

struct RelatednessOptions {
  std::optional<double> aoa_threshold;  // keep words with AoA < threshold
  const std::map<std::string, double>* aoa = nullptr;
  std::optional<std::string> category;  // restrict to one category tag
};
EvalReport eval_relatedness(const RepTable& reps, const RelatednessSet& set, const RelatednessOptions& opt = {});

struct LexicalRelationOptions {
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  MLPOptions mlp;
};
EvalReport eval_lexical_relation(const RepTable& reps, const RelationSet& set, const LexicalRelationOptions& opt = {});

struct SemanticFeatureOptions {
  std::size_t splits = 2;
  std::size_t n_components = 100;
  std::uint64_t seed = 0;
};
EvalReport eval_semantic_features(const RepTable& reps, const FeatureNormSet& set,
                                  const SemanticFeatureOptions& opt = {});

struct PosOptions {
  std::size_t splits = 4;
  std::vector<double> c_grid = {0.01, 1.0, 100.0};
  std::uint64_t seed = 0;
};
EvalReport eval_pos(const RepTable& reps, const PosSet& set, const PosOptions& opt = {});

struct ContextOptions {
  std::size_t segment_width = 3;
  // CLIP checkpoints have no sequence probability; when set they are scored
  // by segment-to-word-feature matching instead of raising CapabilityError.
  bool clip_proxy = false;
};
EvalReport eval_context_understanding(const Model& model, const SentencePairSet& set,
                                      const ContextOptions& opt = {});

struct BrainOptions {
  std::size_t splits = 10;
  double train_fraction = 0.9;
  double ridge_lambda = 1.0;
  std::uint64_t seed = 0;
};
// layer_reps[s][l] is the sentences x dim matrix of layer l for stimulus set s.
EvalReport eval_brain_response(const std::vector<ResponseSet>& sets,
                               const std::vector<std::vector<Tensor>>& layer_reps, const BrainOptions& opt = {});

// Words needed by each dataset (for extraction).
std::vector<std::string> words_of(const RelatednessSet& s);
std::vector<std::string> words_of(const RelationSet& s);
std::vector<std::string> words_of(const FeatureNormSet& s);
std::vector<std::string> words_of(const PosSet& s);

}  // namespace glab
