#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "glab/corpus.hpp"
#include "glab/tensor.hpp"

namespace glab {

enum class WordClass { Noun, Adjective, Verb, Function };

struct SynthWord {
  std::string text;
  WordClass cls = WordClass::Function;
  std::string attribute_type;  // "color", "shape", ... for adjectives; "action" for verbs
  std::size_t concept_id = 0;  // object concept (nouns) or attribute value (adjectives/verbs)
  std::vector<std::size_t> indicators;  // active attribute slots, ascending
};

struct SynthOptions {
  double noise = 0.5;            // std of isotropic feature noise (in norm units)
  double adjective_prob = 0.35;  // chance each attribute of an object is named
  double second_object_prob = 0.5;
};

// A generated grounded world: scenes of objects with attributes, captions
// describing them, and per-scene feature vectors that are a noisy linear
// embedding of the scene's attribute slots.
struct SynthWorld {
  std::uint64_t seed = 0;
  std::vector<std::string> attribute_types;
  std::vector<std::string> slot_names;  // one per attribute value / action
  std::vector<SynthWord> lexicon;       // content words then function words
  std::vector<std::vector<std::size_t>> concepts;  // object concept -> slots
  std::vector<CaptionRecord> records;
  Tensor features;    // n_pairs x feature_dim
  Tensor similarity;  // content words x content words, cosine of indicators

  std::vector<std::string> content_words() const;
  const SynthWord* find(const std::string& word) const;
};

// vocab_size is the number of content words; must be >= 20. feature_dim >= 8.
SynthWorld synth_world(std::uint64_t seed, std::size_t n_pairs, std::size_t vocab_size, std::size_t feature_dim,
                       const SynthOptions& options = {});

// Emits corpus.jsonl, features.fvec and similarity.tsv (word1, word2, sim),
// plus synthetic benchmark datasets in the benchmark file formats:
// relatedness.tsv, relations.tsv, norms.tsv, pos.tsv, sentence_pairs.tsv,
// brain_sentences.tsv, brain_responses.fvec, brain_ceilings.tsv.
void write_synth_world(const SynthWorld& world, const std::filesystem::path& dir, std::uint64_t dataset_seed);

}  // namespace glab
