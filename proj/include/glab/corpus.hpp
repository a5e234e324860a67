#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "glab/tensor.hpp"

namespace glab {

struct CaptionRecord {
  std::string id;
  std::string caption;
  std::size_t fvec_index = 0;
};

// Lowercase, drop control characters, collapse runs of whitespace.
std::string normalize_caption(std::string_view text);

// Word-level tokenizer over normalized text: maximal runs of alphanumerics
// (plus inner apostrophes) form one token, every other non-space character
// is a token of its own.
std::vector<std::string> tokenize(std::string_view text);

// True for tokens carrying at least one alphanumeric character.
bool is_word_token(std::string_view token);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kCls = 3;
  static constexpr int kNumSpecial = 4;

  Vocab();
  // Tokens with frequency >= min_count, most frequent first (ties
  // lexicographic), after the four specials.
  static Vocab build(const std::vector<CaptionRecord>& records, int min_count);
  // Rebuild from a full token list (specials included), as stored in checkpoints.
  static Vocab from_tokens(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& ids) const;

 private:
  explicit Vocab(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct Corpus {
  std::vector<CaptionRecord> records;
  Tensor features;  // count x feature_dim
  std::size_t feature_dim = 0;
  std::size_t token_count = 0;  // tokenizer tokens over loaded records, specials excluded
};

std::size_t count_tokens(std::string_view caption);

// Loads newline-delimited {"id", "caption", "fvec_index"} records and the
// matching FVEC feature file. Loading stops before the first record that
// would push the token count past `token_budget` (nullopt = unlimited).
Corpus load_corpus(const std::filesystem::path& jsonl_path, const std::filesystem::path& fvec_path,
                   std::optional<std::size_t> token_budget = std::nullopt);
std::vector<CaptionRecord> parse_corpus_jsonl(std::istream& in, const std::string& source);
void write_corpus_jsonl(const std::filesystem::path& path, const std::vector<CaptionRecord>& records);

enum class Regime { FullCaption, SingleWord, ContextWindow, WordOnly };

std::string regime_name(Regime r);
Regime parse_regime(std::string_view name);

// Token ids carry no [BOS]: models prepend it. word_only examples are
// [CLS] followed by the word. `feature_row` indexes the corpus feature matrix.
struct TrainingExample {
  std::vector<int> tokens;
  std::optional<std::size_t> feature_row;
  Regime regime = Regime::FullCaption;

  friend bool operator==(const TrainingExample&, const TrainingExample&) = default;
};

std::vector<TrainingExample> make_examples(const std::vector<CaptionRecord>& records, Regime regime,
                                           const Vocab& vocab, std::size_t context_width = 3);

}  // namespace glab
