#include "glab/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "glab/error.hpp"
#include "glab/fvec.hpp"

namespace glab {

namespace {

bool is_alnum(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

}  // namespace

std::string normalize_caption(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (c < 0x20 || c == 0x7f) continue;
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  const std::string norm = normalize_caption(text);
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < norm.size(); ++i) {
    const auto c = static_cast<unsigned char>(norm[i]);
    if (c == ' ') {
      flush();
    } else if (is_alnum(c)) {
      cur.push_back(static_cast<char>(c));
    } else if (c == '\'' && !cur.empty() && i + 1 < norm.size() &&
               is_alnum(static_cast<unsigned char>(norm[i + 1]))) {
      cur.push_back('\'');
    } else {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return tokens;
}

bool is_word_token(std::string_view token) {
  return std::any_of(token.begin(), token.end(), [](char c) { return is_alnum(static_cast<unsigned char>(c)); });
}

std::size_t count_tokens(std::string_view caption) { return tokenize(caption).size(); }

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() : Vocab(std::vector<std::string>{"[PAD]", "[UNK]", "[BOS]", "[CLS]"}) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kNumSpecial || tokens_[kPad] != "[PAD]" || tokens_[kUnk] != "[UNK]" ||
      tokens_[kBos] != "[BOS]" || tokens_[kCls] != "[CLS]") {
    throw ContractError("vocab: token list must start with [PAD] [UNK] [BOS] [CLS]");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw ContractError("vocab: duplicate token '" + tokens_[i] + "'");
    }
  }
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) { return Vocab(std::move(tokens)); }

Vocab Vocab::build(const std::vector<CaptionRecord>& records, int min_count) {
  if (min_count < 1) throw ContractError("build_vocab: min_count must be >= 1");
  if (records.empty()) throw ContractError("build_vocab: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records)
    for (auto& t : tokenize(r.caption)) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts)
    if (n >= static_cast<std::size_t>(min_count)) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{"[PAD]", "[UNK]", "[BOS]", "[CLS]"};
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return from_tokens(std::move(tokens));
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractError("vocab: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& t : tokenize(text)) ids.push_back(id(t));
  return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += token(ids[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus files

std::vector<CaptionRecord> parse_corpus_jsonl(std::istream& in, const std::string& source) {
  std::vector<CaptionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IngestError(where + ": malformed record (" + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("caption") || !j.contains("fvec_index") ||
        !j["id"].is_string() || !j["caption"].is_string() || !j["fvec_index"].is_number_integer() ||
        j["fvec_index"].get<long long>() < 0) {
      throw IngestError(where + ": record needs string id, string caption, non-negative integer fvec_index");
    }
    CaptionRecord r;
    r.id = j["id"].get<std::string>();
    r.caption = normalize_caption(j["caption"].get<std::string>());
    r.fvec_index = j["fvec_index"].get<std::size_t>();
    if (r.caption.empty()) throw IngestError(where + ": caption of record '" + r.id + "' is empty");
    records.push_back(std::move(r));
  }
  return records;
}

void write_corpus_jsonl(const std::filesystem::path& path, const std::vector<CaptionRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open " + path.string() + " for writing");
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["caption"] = r.caption;
    j["fvec_index"] = r.fvec_index;
    out << j.dump() << '\n';
  }
}

Corpus load_corpus(const std::filesystem::path& jsonl_path, const std::filesystem::path& fvec_path,
                   std::optional<std::size_t> token_budget) {
  std::ifstream in(jsonl_path);
  if (!in) throw IngestError("cannot open corpus " + jsonl_path.string());
  Corpus corpus;
  corpus.features = read_fvec_file(fvec_path);
  corpus.feature_dim = corpus.features.cols();
  const std::size_t count = corpus.features.rows();
  for (auto& r : parse_corpus_jsonl(in, jsonl_path.string())) {
    if (r.fvec_index >= count) {
      throw IngestError("record '" + r.id + "': fvec_index " + std::to_string(r.fvec_index) +
                        " outside feature file with " + std::to_string(count) + " rows");
    }
    const std::size_t n = count_tokens(r.caption);
    if (token_budget && corpus.token_count + n > *token_budget) break;
    corpus.token_count += n;
    corpus.records.push_back(std::move(r));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Labeling regimes

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::FullCaption: return "full_caption";
    case Regime::SingleWord: return "single_word";
    case Regime::ContextWindow: return "context_window";
    case Regime::WordOnly: return "word_only";
  }
  return "?";
}

Regime parse_regime(std::string_view name) {
  if (name == "full_caption") return Regime::FullCaption;
  if (name == "single_word") return Regime::SingleWord;
  if (name == "context_window") return Regime::ContextWindow;
  if (name == "word_only") return Regime::WordOnly;
  throw ContractError("unknown regime '" + std::string(name) + "'");
}

std::vector<TrainingExample> make_examples(const std::vector<CaptionRecord>& records, Regime regime,
                                           const Vocab& vocab, std::size_t context_width) {
  if (context_width < 1) throw ContractError("make_examples: context_width must be >= 1");
  std::vector<TrainingExample> out;
  for (std::size_t ri = 0; ri < records.size(); ++ri) {
    const auto& rec = records[ri];
    const auto tokens = tokenize(rec.caption);
    std::vector<int> words;
    for (const auto& t : tokens)
      if (is_word_token(t)) words.push_back(vocab.id(t));
    switch (regime) {
      case Regime::FullCaption: {
        TrainingExample ex{{}, rec.fvec_index, regime};
        for (const auto& t : tokens) ex.tokens.push_back(vocab.id(t));
        if (!ex.tokens.empty()) out.push_back(std::move(ex));
        break;
      }
      case Regime::SingleWord:
        for (int w : words) out.push_back(TrainingExample{{w}, rec.fvec_index, regime});
        break;
      case Regime::WordOnly:
        for (int w : words) out.push_back(TrainingExample{{Vocab::kCls, w}, std::nullopt, regime});
        break;
      case Regime::ContextWindow:
        if (words.empty()) break;
        if (words.size() <= context_width) {
          out.push_back(TrainingExample{words, rec.fvec_index, regime});
          break;
        }
        for (std::size_t s = 0; s + context_width <= words.size(); ++s) {
          out.push_back(TrainingExample{std::vector<int>(words.begin() + static_cast<std::ptrdiff_t>(s),
                                                         words.begin() + static_cast<std::ptrdiff_t>(s + context_width)),
                                        rec.fvec_index, regime});
        }
        break;
    }
  }
  return out;
}

}  // namespace glab
