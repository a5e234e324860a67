#include "glab/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "glab/error.hpp"
#include "glab/fvec.hpp"
#include "glab/rng.hpp"
#include "tsv.hpp"

namespace glab {

// ---------------------------------------------------------------------------
// TSV ingestion

using namespace detail;

namespace {

std::pair<std::string, std::string> unordered(const std::string& a, const std::string& b) {
  return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
}

}  // namespace

RelatednessSet parse_relatedness(std::istream& in, const std::string& source) {
  RelatednessSet set;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : read_tsv(in)) {
    need_fields(source, r, 3, 4);
    RelatednessPair p{normalize_caption(r.fields[0]), normalize_caption(r.fields[1]),
                      parse_number(source, r, r.fields[2]), r.fields.size() > 3 ? r.fields[3] : ""};
    if (!seen.insert(unordered(p.w1, p.w2)).second) {
      throw IngestError(where(source, r) + ": duplicate pair (" + p.w1 + ", " + p.w2 + ")");
    }
    set.pairs.push_back(std::move(p));
  }
  return set;
}

RelatednessSet load_relatedness(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_relatedness(in, path.string());
}

std::string relation_label_name(RelationLabel l) {
  switch (l) {
    case RelationLabel::Synonym: return "synonymy";
    case RelationLabel::Antonym: return "antonym";
    case RelationLabel::Hypernym: return "hypernymy";
    case RelationLabel::Meronym: return "part_whole";
    case RelationLabel::Random: return "random";
  }
  return "?";
}

RelationLabel parse_relation_label(std::string_view s) {
  std::string v(s);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "syn" || v == "synonym" || v == "synonymy") return RelationLabel::Synonym;
  if (v == "ant" || v == "antonym" || v == "antonymy") return RelationLabel::Antonym;
  if (v == "hyper" || v == "hypernym" || v == "hypernymy") return RelationLabel::Hypernym;
  if (v == "part_of" || v == "part_whole" || v == "meronym" || v == "meronymy") return RelationLabel::Meronym;
  if (v == "random" || v == "rand") return RelationLabel::Random;
  throw IngestError("unknown relation label '" + std::string(s) + "'");
}

RelationSet parse_relations(std::istream& in, const std::string& source) {
  RelationSet set;
  std::set<std::pair<std::string, std::string>> train, test;
  for (const auto& r : read_tsv(in)) {
    need_fields(source, r, 4, 4);
    RelationPair p;
    p.w1 = normalize_caption(r.fields[0]);
    p.w2 = normalize_caption(r.fields[1]);
    try {
      p.label = parse_relation_label(r.fields[2]);
    } catch (const IngestError& e) {
      throw IngestError(where(source, r) + ": " + e.what());
    }
    if (r.fields[3] == "train") p.train = true;
    else if (r.fields[3] == "test") p.train = false;
    else throw IngestError(where(source, r) + ": split must be 'train' or 'test', got '" + r.fields[3] + "'");
    const auto key = unordered(p.w1, p.w2);
    if ((p.train ? test : train).count(key)) {
      throw IngestError(where(source, r) + ": pair (" + p.w1 + ", " + p.w2 + ") appears in both train and test");
    }
    (p.train ? train : test).insert(key);
    set.pairs.push_back(std::move(p));
  }
  return set;
}

RelationSet load_relations(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_relations(in, path.string());
}

FeatureNormSet parse_feature_norms(std::istream& in, const std::string& source) {
  FeatureNormSet set;
  std::map<std::string, std::size_t> fidx;
  for (const auto& r : read_tsv(in)) {
    need_fields(source, r, 3, 3);
    const std::string word = normalize_caption(r.fields[0]);
    const double strength = parse_number(source, r, r.fields[2]);
    if (strength < 0.0) throw IngestError(where(source, r) + ": negative feature strength");
    auto [it, fresh] = fidx.try_emplace(r.fields[1], set.features.size());
    if (fresh) set.features.push_back(r.fields[1]);
    auto [wit, new_word] = set.norms.try_emplace(word);
    if (new_word) set.words.push_back(word);
    for (auto& [f, s] : wit->second) {
      if (f == it->second) throw IngestError(where(source, r) + ": duplicate feature for '" + word + "'");
    }
    wit->second.emplace_back(it->second, strength);
  }
  for (const auto& w : set.words) {
    const auto& fs = set.norms[w];
    if (std::none_of(fs.begin(), fs.end(), [](const auto& p) { return p.second > 0.0; })) {
      throw IngestError(source + ": word '" + w + "' has no nonzero feature");
    }
  }
  return set;
}

FeatureNormSet load_feature_norms(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_feature_norms(in, path.string());
}

PosSet parse_pos(std::istream& in, const std::string& source) {
  PosSet set;
  for (const auto& r : read_tsv(in)) {
    need_fields(source, r, 2, 2);
    set.entries.emplace_back(normalize_caption(r.fields[0]), r.fields[1]);
  }
  return set;
}

PosSet load_pos(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_pos(in, path.string());
}

SentencePairSet parse_sentence_pairs(std::istream& in, const std::string& source) {
  SentencePairSet set;
  for (const auto& r : read_tsv(in)) {
    need_fields(source, r, 5, 5);
    SentencePair p{normalize_caption(r.fields[0]), normalize_caption(r.fields[1]), normalize_caption(r.fields[2]),
                   normalize_caption(r.fields[3]), r.fields[4]};
    if (p.original == p.modified) {
      throw ContractError(where(source, r) + ": original and modified sentences are identical");
    }
    const auto toks = tokenize(p.original);
    const auto target = tokenize(p.target);
    if (target.empty() || std::search(toks.begin(), toks.end(), target.begin(), target.end()) == toks.end()) {
      throw ContractError(where(source, r) + ": target '" + p.target + "' not present in original sentence");
    }
    set.pairs.push_back(std::move(p));
  }
  return set;
}

SentencePairSet load_sentence_pairs(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_sentence_pairs(in, path.string());
}

void write_sentence_pairs(const std::filesystem::path& path, const SentencePairSet& set) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open " + path.string() + " for writing");
  for (const auto& p : set.pairs)
    out << p.target << '\t' << p.distractor << '\t' << p.original << '\t' << p.modified << '\t' << p.pos << '\n';
}

ResponseSet load_response_set(const std::filesystem::path& sentences_tsv, const std::filesystem::path& responses_fvec,
                              const std::filesystem::path& ceilings_tsv) {
  ResponseSet set;
  {
    auto in = open_in(sentences_tsv);
    for (const auto& r : read_tsv(in)) {
      need_fields(sentences_tsv.string(), r, 2, 2);
      set.passages.push_back(r.fields[0]);
      set.sentences.push_back(normalize_caption(r.fields[1]));
    }
  }
  set.responses = read_fvec_file(responses_fvec);
  if (set.responses.rows() != set.sentences.size()) {
    throw IngestError(responses_fvec.string() + ": " + std::to_string(set.responses.rows()) +
                      " response rows for " + std::to_string(set.sentences.size()) + " sentences");
  }
  {
    auto in = open_in(ceilings_tsv);
    for (const auto& r : read_tsv(in)) {
      need_fields(ceilings_tsv.string(), r, 1, 2);
      const double c = parse_number(ceilings_tsv.string(), r, r.fields.back());
      if (!(c > 0.0)) throw IngestError(where(ceilings_tsv.string(), r) + ": noise ceiling must be > 0");
      set.ceilings.push_back(c);
    }
  }
  if (set.ceilings.size() != set.responses.cols()) {
    throw IngestError(ceilings_tsv.string() + ": " + std::to_string(set.ceilings.size()) + " ceilings for " +
                      std::to_string(set.responses.cols()) + " voxels");
  }
  return set;
}

std::map<std::string, double> load_aoa(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::map<std::string, double> aoa;
  for (const auto& r : read_tsv(in)) {
    need_fields(path.string(), r, 2, 2);
    aoa[normalize_caption(r.fields[0])] = parse_number(path.string(), r, r.fields[1]);
  }
  return aoa;
}

// ---------------------------------------------------------------------------
// Representations

Tensor RepTable::layer_matrix(const std::vector<std::string>& words, std::size_t layer) const {
  if (words.empty()) throw ContractError("layer_matrix: no words");
  if (layer >= n_layers) throw ContractError("layer_matrix: layer " + std::to_string(layer) + " out of range");
  const std::size_t d = reps.at(words[0])[layer].size();
  Tensor out(Shape{words.size(), d});
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto it = reps.find(words[i]);
    if (it == reps.end()) throw ContractError("layer_matrix: no representation for '" + words[i] + "'");
    const Tensor& v = it->second[layer];
    std::copy(v.storage().begin(), v.storage().end(), out.row(i).begin());
  }
  return out;
}

RepTable extract_rep_table(const Model& model, const std::vector<std::string>& words) {
  RepTable t;
  t.n_layers = model.config().n_layers + 1;
  for (const auto& w : words) {
    if (t.reps.count(w) || t.unk_words.count(w)) continue;
    WordReps r = extract_word_reps(model, w, model.vocab());
    if (r.has_unk) t.unk_words.insert(w);
    else t.reps.emplace(w, std::move(r.layers));
  }
  return t;
}

std::vector<Tensor> sentence_layer_matrices(const Model& model, const std::vector<std::string>& sentences) {
  if (sentences.empty()) throw ContractError("sentence_layer_matrices: no sentences");
  const std::size_t L = model.config().n_layers + 1, d = model.config().hidden_dim;
  std::vector<Tensor> out(L, Tensor(Shape{sentences.size(), d}));
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const WordReps r = extract_sentence_reps(model, sentences[i], model.vocab());
    for (std::size_t l = 0; l < L; ++l) std::copy_n(r.layers[l].ptr(), d, out[l].row(i).data());
  }
  return out;
}

std::vector<std::string> words_of(const RelatednessSet& s) {
  std::vector<std::string> w;
  for (const auto& p : s.pairs) {
    w.push_back(p.w1);
    w.push_back(p.w2);
  }
  return w;
}

std::vector<std::string> words_of(const RelationSet& s) {
  std::vector<std::string> w;
  for (const auto& p : s.pairs) {
    w.push_back(p.w1);
    w.push_back(p.w2);
  }
  return w;
}

std::vector<std::string> words_of(const FeatureNormSet& s) { return s.words; }

std::vector<std::string> words_of(const PosSet& s) {
  std::vector<std::string> w;
  for (const auto& [word, tag] : s.entries) w.push_back(word);
  return w;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> json_opt(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

// Index of the first maximum of `key` over layers that have it.
std::optional<std::size_t> argmax_layer(const std::vector<LayerScore>& layers,
                                        std::optional<double> LayerScore::*key) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& v = layers[i].*key;
    if (!v) continue;
    if (!best || *v > *(layers[*best].*key)) best = i;
  }
  return best;
}

void finalize_selection(EvalReport& r, bool by_validation) {
  r.selection_criterion = by_validation ? "max_validation" : "max_score";
  const auto best = argmax_layer(r.per_layer, by_validation ? &LayerScore::validation : &LayerScore::score);
  if (!best) {
    std::string why = r.per_layer.empty() ? "no layers" : r.per_layer.front().error;
    throw NumericError(r.benchmark + ": no layer could be scored (" + why + ")");
  }
  r.selected_layer = r.per_layer[*best].layer;
  if (!r.per_layer[*best].score) throw NumericError(r.benchmark + ": selected layer has no test score");
  r.final_score = *r.per_layer[*best].score;
}

}  // namespace

std::uint64_t split_seed(const std::string& benchmark, std::uint64_t seed, std::size_t split_index) {
  return Rng::mix(seed, "splits." + benchmark + "#" + std::to_string(split_index));
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["schema"] = kReportSchema;
  j["benchmark"] = r.benchmark;
  j["config_fingerprint"] = r.config_fingerprint;
  j["selection_criterion"] = r.selection_criterion;
  j["selected_layer"] = r.selected_layer;
  j["final_score"] = r.final_score;
  j["split_seeds"] = r.split_seeds;
  auto layers = nlohmann::ordered_json::array();
  for (const auto& l : r.per_layer) {
    nlohmann::ordered_json e;
    e["layer"] = l.layer;
    e["score"] = opt_json(l.score);
    e["validation"] = opt_json(l.validation);
    if (!l.error.empty()) e["error"] = l.error;
    layers.push_back(e);
  }
  j["per_layer"] = layers;
  j["warnings"] = r.warnings;
  j["details"] = r.details;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>() != kReportSchema) {
      throw LoadError("report schema is not " + std::string(kReportSchema));
    }
    EvalReport r;
    r.benchmark = j.at("benchmark");
    r.config_fingerprint = j.at("config_fingerprint");
    r.selection_criterion = j.at("selection_criterion");
    r.selected_layer = j.at("selected_layer");
    r.final_score = j.at("final_score");
    r.split_seeds = j.at("split_seeds").get<std::vector<std::uint64_t>>();
    for (const auto& e : j.at("per_layer")) {
      LayerScore l;
      l.layer = e.at("layer");
      l.score = json_opt(e.at("score"));
      l.validation = json_opt(e.at("validation"));
      if (e.contains("error")) l.error = e.at("error");
      r.per_layer.push_back(l);
    }
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    r.details = j.at("details");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed report: ") + e.what());
  }
}

void write_report(const std::filesystem::path& path, const EvalReport& r) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open " + path.string() + " for writing");
  out << report_to_json(r).dump(2) << '\n';
}

EvalReport read_report(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

void audit_report(const EvalReport& r) {
  const bool by_val = r.selection_criterion == "max_validation";
  if (!by_val && r.selection_criterion != "max_score") {
    throw ContractError("audit: unknown selection criterion '" + r.selection_criterion + "'");
  }
  const auto best = argmax_layer(r.per_layer, by_val ? &LayerScore::validation : &LayerScore::score);
  if (!best || r.per_layer[*best].layer != r.selected_layer) {
    throw ContractError("audit: selected layer " + std::to_string(r.selected_layer) + " is not the " +
                        r.selection_criterion + " layer");
  }
  if (!r.per_layer[*best].score || *r.per_layer[*best].score != r.final_score) {
    throw ContractError("audit: final score does not match the selected layer's score");
  }
  // Scores that are means over splits must match their stored traces.
  if (r.details.contains("split_scores")) {
    const auto& trace = r.details["split_scores"];
    for (const auto& l : r.per_layer) {
      if (!l.score) continue;
      const auto& per_split = trace.at(l.layer);
      double s = 0.0;
      for (const auto& v : per_split) s += v.get<double>();
      const double mean = s / static_cast<double>(per_split.size());
      if (std::abs(mean - *l.score) > 1e-12 * std::max(1.0, std::abs(mean))) {
        throw ContractError("audit: layer " + std::to_string(l.layer) + " score differs from its split trace");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace {

double cosine(const Tensor& a, const Tensor& b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw NumericError("zero-norm representation");
  return d / std::sqrt(na * nb);
}

struct Split3 {
  std::vector<std::size_t> train, val, test;
};

Split3 split_3way(std::size_t n, Rng& rng, double train_frac = 0.8, double val_frac = 0.1) {
  const auto perm = rng.permutation(n);
  const auto n_train = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n)));
  Split3 s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) s.train.push_back(perm[i]);
    else if (i < n_train + n_val) s.val.push_back(perm[i]);
    else s.test.push_back(perm[i]);
  }
  return s;
}

Tensor take_rows(const Tensor& X, const std::vector<std::size_t>& rows) {
  Tensor out(Shape{rows.size(), X.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(X.row(rows[i]).data(), X.cols(), out.row(i).data());
  return out;
}

template <typename T>
std::vector<T> take(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

nlohmann::ordered_json rep_notes(const RepTable& reps) {
  nlohmann::ordered_json j;
  j["word_extraction"] = "isolation: [BOS] + word, last token";
  j["unk_words"] = reps.unk_words.size();
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Relatedness

EvalReport eval_relatedness(const RepTable& reps, const RelatednessSet& set, const RelatednessOptions& opt) {
  EvalReport r;
  r.benchmark = "relatedness";
  std::vector<const RelatednessPair*> kept;
  std::size_t missing = 0, aoa_dropped = 0, category_dropped = 0;
  const bool use_aoa = opt.aoa_threshold && opt.aoa;
  if (opt.aoa_threshold && !opt.aoa) r.warnings.push_back("AoA threshold given without an AoA table; filter skipped");
  for (const auto& p : set.pairs) {
    if (opt.category && p.category != *opt.category) {
      ++category_dropped;
      continue;
    }
    if (use_aoa) {
      auto young = [&](const std::string& w) {
        auto it = opt.aoa->find(w);
        return it != opt.aoa->end() && it->second < *opt.aoa_threshold;
      };
      if (!young(p.w1) || !young(p.w2)) {
        ++aoa_dropped;
        continue;
      }
    }
    if (!reps.contains(p.w1) || !reps.contains(p.w2)) {
      ++missing;
      continue;
    }
    kept.push_back(&p);
  }
  if (kept.size() < 3) {
    throw ContractError("eval_relatedness: only " + std::to_string(kept.size()) + " pairs survive filtering");
  }
  std::vector<double> human;
  for (const auto* p : kept) human.push_back(p->score);
  for (std::size_t l = 0; l < reps.n_layers; ++l) {
    LayerScore ls;
    ls.layer = l;
    try {
      std::vector<double> cs;
      cs.reserve(kept.size());
      for (const auto* p : kept) cs.push_back(cosine(reps.reps.at(p->w1)[l], reps.reps.at(p->w2)[l]));
      ls.score = spearman(cs, human);
    } catch (const NumericError& e) {
      ls.error = e.what();
    }
    r.per_layer.push_back(ls);
  }
  finalize_selection(r, false);
  r.details = rep_notes(reps);
  r.details["pairs_used"] = kept.size();
  r.details["pairs_dropped_missing"] = missing;
  r.details["pairs_dropped_aoa"] = aoa_dropped;
  r.details["pairs_dropped_category"] = category_dropped;
  r.details["aoa_filter"] = use_aoa ? nlohmann::ordered_json(*opt.aoa_threshold) : nlohmann::ordered_json("not applied");
  if (!use_aoa) r.warnings.push_back("no AoA table supplied; AoA filter skipped");
  return r;
}

// ---------------------------------------------------------------------------
// Lexical relations

EvalReport eval_lexical_relation(const RepTable& reps, const RelationSet& set, const LexicalRelationOptions& opt) {
  if (opt.val_fraction < 0.0 || opt.val_fraction >= 1.0) throw ContractError("val_fraction must be in [0, 1)");
  EvalReport r;
  r.benchmark = "lexical_relation";
  std::vector<const RelationPair*> train, test;
  std::size_t missing = 0;
  for (const auto& p : set.pairs) {
    if (!reps.contains(p.w1) || !reps.contains(p.w2)) {
      ++missing;
      continue;
    }
    (p.train ? train : test).push_back(&p);
  }
  if (train.empty() || test.empty()) throw ContractError("eval_lexical_relation: train and test must be nonempty");

  // Stratified validation slice.
  const std::uint64_t vseed = split_seed(r.benchmark, opt.seed, 0);
  r.split_seeds.push_back(vseed);
  Rng rng(vseed);
  std::vector<std::vector<std::size_t>> by_label(kNumRelationLabels);
  for (std::size_t i = 0; i < train.size(); ++i) by_label[static_cast<std::size_t>(train[i]->label)].push_back(i);
  std::vector<char> is_val(train.size(), 0);
  for (auto& group : by_label) {
    rng.shuffle(group);
    const auto n_val = static_cast<std::size_t>(std::round(opt.val_fraction * static_cast<double>(group.size())));
    for (std::size_t i = 0; i < n_val && i + 1 < group.size(); ++i) is_val[group[i]] = 1;
  }
  std::vector<const RelationPair*> fit, val;
  for (std::size_t i = 0; i < train.size(); ++i) (is_val[i] ? val : fit).push_back(train[i]);

  std::vector<int> classes;
  for (const auto* p : fit) classes.push_back(static_cast<int>(p->label));
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  for (std::size_t c = 0; c < kNumRelationLabels; ++c) {
    if (!std::binary_search(classes.begin(), classes.end(), static_cast<int>(c))) {
      r.warnings.push_back("class '" + relation_label_name(static_cast<RelationLabel>(c)) +
                           "' absent from training; excluded from the macro average");
    }
  }
  if (classes.size() < 2) throw ContractError("eval_lexical_relation: fewer than 2 classes in training");
  auto known = [&](const RelationPair* p) {
    return std::binary_search(classes.begin(), classes.end(), static_cast<int>(p->label));
  };
  const std::size_t test_before = test.size(), val_before = val.size();
  std::erase_if(test, [&](const RelationPair* p) { return !known(p); });
  std::erase_if(val, [&](const RelationPair* p) { return !known(p); });
  if (test.size() < test_before) {
    r.warnings.push_back(std::to_string(test_before - test.size()) + " test pairs of untrained classes dropped");
  }
  (void)val_before;
  if (test.empty()) throw ContractError("eval_lexical_relation: no scorable test pairs");
  if (val.empty()) r.warnings.push_back("validation slice empty; selecting by training macro-F1");

  auto labels_of = [](const std::vector<const RelationPair*>& ps) {
    std::vector<int> y;
    for (const auto* p : ps) y.push_back(static_cast<int>(p->label));
    return y;
  };
  auto diff_matrix = [&](const std::vector<const RelationPair*>& ps, std::size_t l) {
    const std::size_t d = reps.reps.begin()->second[l].size();
    Tensor X(Shape{ps.size(), d});
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const Tensor& a = reps.reps.at(ps[i]->w1)[l];
      const Tensor& b = reps.reps.at(ps[i]->w2)[l];
      for (std::size_t c = 0; c < d; ++c) X(i, c) = a[c] - b[c];
    }
    return X;
  };
  const auto y_fit = labels_of(fit), y_val = labels_of(val), y_test = labels_of(test);
  MLPOptions mlp = opt.mlp;
  mlp.seed = Rng::mix(opt.seed, "probes.lexical_relation");
  for (std::size_t l = 0; l < reps.n_layers; ++l) {
    LayerScore ls;
    ls.layer = l;
    try {
      const MLPProbe probe = fit_mlp(diff_matrix(fit, l), y_fit, mlp);
      ls.validation = val.empty() ? macro_f1(predict(probe, diff_matrix(fit, l)), y_fit, classes)
                                  : macro_f1(predict(probe, diff_matrix(val, l)), y_val, classes);
      ls.score = macro_f1(predict(probe, diff_matrix(test, l)), y_test, classes);
    } catch (const NumericError& e) {
      ls.error = e.what();
    }
    r.per_layer.push_back(ls);
  }
  finalize_selection(r, true);
  r.details = rep_notes(reps);
  r.details["train_pairs"] = fit.size();
  r.details["validation_pairs"] = val.size();
  r.details["test_pairs"] = test.size();
  r.details["pairs_dropped_missing"] = missing;
  const auto best_test = argmax_layer(r.per_layer, &LayerScore::score);
  r.details["best_test_layer"] = r.per_layer[*best_test].layer;
  r.details["best_test_score"] = *r.per_layer[*best_test].score;
  r.details["mlp"] = {{"hidden", mlp.hidden},         {"lr", mlp.lr},   {"alpha", mlp.alpha},
                      {"batch_size", mlp.batch_size}, {"max_epochs", mlp.max_epochs}, {"tol", mlp.tol}};
  return r;
}

// ---------------------------------------------------------------------------
// Semantic features

EvalReport eval_semantic_features(const RepTable& reps, const FeatureNormSet& set, const SemanticFeatureOptions& opt) {
  if (set.features.empty()) throw ContractError("eval_semantic_features: feature inventory is empty");
  if (opt.splits < 1) throw ContractError("eval_semantic_features: need at least one split");
  EvalReport r;
  r.benchmark = "semantic_features";
  std::vector<std::string> words;
  for (const auto& w : set.words)
    if (reps.contains(w)) words.push_back(w);
  if (words.size() < 20) {
    throw ContractError("eval_semantic_features: need >= 20 words with representations, have " +
                        std::to_string(words.size()));
  }
  const std::size_t n = words.size(), F = set.features.size();
  Tensor Y(Shape{n, F});
  std::vector<std::vector<std::size_t>> truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [f, s] : set.norms.at(words[i])) {
      Y(i, f) = s;
      if (s > 0.0) truth[i].push_back(f);
    }
  }
  std::vector<Split3> splits;
  for (std::size_t s = 0; s < opt.splits; ++s) {
    r.split_seeds.push_back(split_seed(r.benchmark, opt.seed, s));
    Rng rng(r.split_seeds.back());
    splits.push_back(split_3way(n, rng));
    if (splits.back().val.empty() || splits.back().test.empty()) {
      throw ContractError("eval_semantic_features: split leaves no validation or test words");
    }
  }
  // Per-layer, per-word test MAP accumulated over the splits the word is tested in.
  std::vector<std::map<std::string, std::pair<double, std::size_t>>> word_map(reps.n_layers);
  auto mean_map = [&](const Tensor& pred, const std::vector<std::size_t>& rows,
                      std::map<std::string, std::pair<double, std::size_t>>* per_word) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto row = pred.row(i);
      const double m = map_at_k(std::vector<double>(row.begin(), row.end()), truth[rows[i]]);
      s += m;
      if (per_word) {
        auto& slot = (*per_word)[words[rows[i]]];
        slot.first += m;
        ++slot.second;
      }
    }
    return s / static_cast<double>(rows.size());
  };
  nlohmann::ordered_json split_scores = nlohmann::ordered_json::array();
  nlohmann::ordered_json split_val = nlohmann::ordered_json::array();
  std::set<std::string> warned;
  for (std::size_t l = 0; l < reps.n_layers; ++l) {
    const Tensor X = reps.layer_matrix(words, l);
    LayerScore ls;
    ls.layer = l;
    std::vector<double> tests, vals;
    for (const auto& sp : splits) {
      const PLSModel pls = fit_pls(take_rows(X, sp.train), take_rows(Y, sp.train), opt.n_components);
      for (const auto& w : pls.warnings)
        if (warned.insert(w).second) r.warnings.push_back(w);
      vals.push_back(mean_map(predict(pls, take_rows(X, sp.val)), sp.val, nullptr));
      tests.push_back(mean_map(predict(pls, take_rows(X, sp.test)), sp.test, &word_map[l]));
    }
    ls.validation = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
    ls.score = std::accumulate(tests.begin(), tests.end(), 0.0) / static_cast<double>(tests.size());
    split_scores.push_back(tests);
    split_val.push_back(vals);
    r.per_layer.push_back(ls);
  }
  finalize_selection(r, true);
  r.details = rep_notes(reps);
  r.details["words_used"] = n;
  r.details["features"] = F;
  r.details["n_components"] = opt.n_components;
  r.details["split_scores"] = split_scores;
  r.details["split_validation"] = split_val;
  nlohmann::ordered_json per_word = nlohmann::ordered_json::object();
  for (const auto& [w, acc] : word_map[r.selected_layer]) per_word[w] = acc.first / static_cast<double>(acc.second);
  r.details["per_word_test_map"] = per_word;
  return r;
}

// ---------------------------------------------------------------------------
// Part of speech

EvalReport eval_pos(const RepTable& reps, const PosSet& set, const PosOptions& opt) {
  if (opt.splits < 1) throw ContractError("eval_pos: need at least one split");
  if (opt.c_grid.empty()) throw ContractError("eval_pos: empty C grid");
  EvalReport r;
  r.benchmark = "pos";
  std::vector<std::string> words;
  std::vector<std::string> tags;
  std::set<std::string> seen;
  std::size_t missing = 0, duplicates = 0;
  for (const auto& [w, t] : set.entries) {
    if (!seen.insert(w).second) {
      ++duplicates;
      continue;
    }
    if (!reps.contains(w)) {
      ++missing;
      continue;
    }
    words.push_back(w);
    tags.push_back(t);
  }
  std::vector<std::string> tag_names(tags);
  std::sort(tag_names.begin(), tag_names.end());
  tag_names.erase(std::unique(tag_names.begin(), tag_names.end()), tag_names.end());
  if (tag_names.size() < 2) throw ContractError("eval_pos: need at least 2 tags");
  std::vector<int> y;
  for (const auto& t : tags) {
    y.push_back(static_cast<int>(std::lower_bound(tag_names.begin(), tag_names.end(), t) - tag_names.begin()));
  }
  for (std::size_t k = 0; k < tag_names.size(); ++k) {
    if (std::count(y.begin(), y.end(), static_cast<int>(k)) == 1) {
      r.warnings.push_back("tag '" + tag_names[k] + "' has a single exemplar");
    }
  }
  if (duplicates) r.warnings.push_back(std::to_string(duplicates) + " duplicate word entries ignored");

  std::vector<Split3> splits;
  for (std::size_t s = 0; s < opt.splits; ++s) {
    r.split_seeds.push_back(split_seed(r.benchmark, opt.seed, s));
    Rng rng(r.split_seeds.back());
    splits.push_back(split_3way(words.size(), rng));
    if (splits.back().val.empty() || splits.back().test.empty()) {
      throw ContractError("eval_pos: split leaves no validation or test words");
    }
  }
  SVCOptions svc;
  svc.seed = Rng::mix(opt.seed, "probes.pos");
  nlohmann::ordered_json split_scores = nlohmann::ordered_json::array();
  nlohmann::ordered_json grid_trace = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < reps.n_layers; ++l) {
    const Tensor X = reps.layer_matrix(words, l);
    std::vector<std::vector<double>> val_acc(opt.c_grid.size()), test_acc(opt.c_grid.size());
    for (const auto& sp : splits) {
      const Tensor Xtr = take_rows(X, sp.train), Xva = take_rows(X, sp.val), Xte = take_rows(X, sp.test);
      const auto ytr = take(y, sp.train), yva = take(y, sp.val), yte = take(y, sp.test);
      for (std::size_t c = 0; c < opt.c_grid.size(); ++c) {
        const SVCProbe probe = fit_svc(Xtr, ytr, opt.c_grid[c], svc);
        val_acc[c].push_back(accuracy(predict(probe, Xva), yva));
        test_acc[c].push_back(accuracy(predict(probe, Xte), yte));
      }
    }
    auto mean = [](const std::vector<double>& v) {
      return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    std::size_t best_c = 0;
    nlohmann::ordered_json layer_grid = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < opt.c_grid.size(); ++c) {
      if (mean(val_acc[c]) > mean(val_acc[best_c])) best_c = c;
      layer_grid.push_back({{"C", opt.c_grid[c]}, {"validation", mean(val_acc[c])}, {"test", mean(test_acc[c])}});
    }
    LayerScore ls;
    ls.layer = l;
    ls.validation = mean(val_acc[best_c]);
    ls.score = mean(test_acc[best_c]);
    split_scores.push_back(test_acc[best_c]);
    grid_trace.push_back({{"best_C", opt.c_grid[best_c]}, {"grid", layer_grid}});
    r.per_layer.push_back(ls);
  }
  finalize_selection(r, true);
  r.details = rep_notes(reps);
  r.details["words_used"] = words.size();
  r.details["words_dropped_missing"] = missing;
  r.details["tags"] = tag_names;
  r.details["split_scores"] = split_scores;
  r.details["c_selection"] = grid_trace;
  r.details["selected_C"] = grid_trace[r.selected_layer]["best_C"];
  return r;
}

// ---------------------------------------------------------------------------
// Context understanding

namespace {

std::vector<std::vector<int>> segments(const std::vector<int>& ids, std::size_t width) {
  std::vector<std::vector<int>> out;
  for (std::size_t s = 0; s < ids.size(); s += width) {
    out.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(s),
                     ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), s + width)));
  }
  return out;
}

double lm_score(const Model& model, const std::vector<int>& ids) {
  std::vector<int> seq{Vocab::kBos};
  seq.insert(seq.end(), ids.begin(), ids.end());
  if (seq.size() > model.config().max_seq_len) {
    throw ContractError("sentence of " + std::to_string(ids.size()) + " tokens exceeds max_seq_len");
  }
  std::optional<Tensor> zero;
  if (model.fusion().consumes_features()) zero = Tensor(Shape{1, model.feature_dim()});
  return sequence_logprob(model, seq, zero ? &*zero : nullptr);
}

double clip_proxy(const Model& model, const std::vector<int>& seg) {
  const Tensor& table = *model.word_features();
  const std::size_t center = static_cast<std::size_t>(seg[seg.size() / 2]);
  auto f = table.row(center);
  double nf = 0.0;
  for (double v : f) nf += v * v;
  if (nf == 0.0) return 0.0;
  const Tensor e = clip_text_embedding(model, seg);
  double d = 0.0;
  for (std::size_t c = 0; c < f.size(); ++c) d += e[c] * f[c];
  return d / std::sqrt(nf);
}

}  // namespace

EvalReport eval_context_understanding(const Model& model, const SentencePairSet& set, const ContextOptions& opt) {
  if (opt.segment_width < 1) throw ContractError("segment_width must be >= 1");
  EvalReport r;
  r.benchmark = "context";
  std::string method;
  if (model.is_clip()) {
    if (!opt.clip_proxy) {
      throw CapabilityError("eval_context_understanding: CLIP checkpoints need the segment-matching proxy enabled");
    }
    if (!model.word_features()) {
      throw CapabilityError("eval_context_understanding: CLIP checkpoint has no word feature table for the proxy");
    }
    method = "clip_segment_matching_proxy";
  } else if (model.regime() == Regime::ContextWindow) {
    method = "segment_logprob_sum";
  } else {
    method = "sentence_logprob";
  }
  auto score = [&](const std::vector<int>& ids) {
    if (method == "sentence_logprob") return lm_score(model, ids);
    // Segment methods see word tokens only, as in context_window training.
    std::vector<int> words;
    for (int id : ids)
      if (is_word_token(model.vocab().token(id))) words.push_back(id);
    double s = 0.0;
    for (const auto& seg : segments(words, opt.segment_width))
      s += method == "clip_segment_matching_proxy" ? clip_proxy(model, seg) : lm_score(model, seg);
    return s;
  };
  std::map<std::string, std::pair<double, std::size_t>> by_pos;
  double credit = 0.0;
  std::size_t scored = 0, skipped = 0, ties = 0, unk = 0;
  for (const auto& p : set.pairs) {
    const auto a = model.vocab().encode(p.original);
    const auto b = model.vocab().encode(p.modified);
    if (a.empty() || b.empty() || a.size() + 1 > model.config().max_seq_len ||
        b.size() + 1 > model.config().max_seq_len) {
      ++skipped;
      continue;
    }
    if (std::count(a.begin(), a.end(), Vocab::kUnk) || std::count(b.begin(), b.end(), Vocab::kUnk)) ++unk;
    const double sa = score(a), sb = score(b);
    const double c = sa > sb ? 1.0 : sa == sb ? 0.5 : 0.0;
    ties += sa == sb;
    credit += c;
    ++scored;
    auto& slot = by_pos[p.pos];
    slot.first += c;
    ++slot.second;
  }
  if (scored == 0) throw ContractError("eval_context_understanding: no scorable sentence pairs");
  LayerScore ls;
  ls.layer = 0;
  ls.score = credit / static_cast<double>(scored);
  r.per_layer.push_back(ls);
  finalize_selection(r, false);
  r.details["method"] = method;
  r.details["tie_credit"] = 0.5;
  r.details["pairs_scored"] = scored;
  r.details["pairs_skipped"] = skipped;
  r.details["pairs_with_unk"] = unk;
  r.details["ties"] = ties;
  if (method != "sentence_logprob") r.details["segment_width"] = opt.segment_width;
  nlohmann::ordered_json pos = nlohmann::ordered_json::object();
  for (const auto& [k, v] : by_pos) pos[k] = {{"fraction", v.first / static_cast<double>(v.second)}, {"pairs", v.second}};
  r.details["per_pos"] = pos;
  if (model.fusion().consumes_features()) r.details["visual_input"] = "zero feature vector";
  return r;
}

// ---------------------------------------------------------------------------
// Brain responses

EvalReport eval_brain_response(const std::vector<ResponseSet>& sets, const std::vector<std::vector<Tensor>>& layer_reps,
                               const BrainOptions& opt) {
  if (sets.empty() || sets.size() != layer_reps.size()) {
    throw ContractError("eval_brain_response: need one representation stack per stimulus set");
  }
  if (opt.splits < 1) throw ContractError("eval_brain_response: need at least one split");
  if (!(opt.train_fraction > 0.0 && opt.train_fraction < 1.0)) {
    throw ContractError("eval_brain_response: train_fraction must be in (0, 1)");
  }
  EvalReport r;
  r.benchmark = "brain";
  const std::size_t L = layer_reps[0].size();
  for (std::size_t s = 0; s < sets.size(); ++s) {
    if (layer_reps[s].size() != L) throw ContractError("eval_brain_response: layer counts differ across sets");
    for (const auto& m : layer_reps[s]) {
      if (m.rows() != sets[s].sentences.size()) {
        throw ShapeError("eval_brain_response: representation rows do not match sentences of set " +
                         std::to_string(s));
      }
    }
  }
  // Passage-level splits, resampled while any voxel has zero test variance.
  struct SplitRows {
    std::vector<std::size_t> train, test;
  };
  std::vector<std::vector<SplitRows>> plan(sets.size());
  std::size_t resampled = 0;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const ResponseSet& rs = sets[s];
    std::vector<std::string> passages;
    std::map<std::string, std::size_t> pidx;
    for (const auto& p : rs.passages)
      if (pidx.try_emplace(p, passages.size()).second) passages.push_back(p);
    if (passages.size() < 2) throw ContractError("eval_brain_response: need at least 2 passages");
    const std::size_t n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::round(opt.train_fraction * static_cast<double>(passages.size()))), 1,
        passages.size() - 1);
    for (std::size_t k = 0; k < opt.splits; ++k) {
      const std::uint64_t seed = split_seed(r.benchmark + "." + std::to_string(s), opt.seed, k);
      r.split_seeds.push_back(seed);
      Rng rng(seed);
      SplitRows rows;
      for (int attempt = 0;; ++attempt) {
        const auto perm = rng.permutation(passages.size());
        std::vector<char> in_train(passages.size(), 0);
        for (std::size_t i = 0; i < n_train; ++i) in_train[perm[i]] = 1;
        rows = SplitRows{};
        for (std::size_t i = 0; i < rs.sentences.size(); ++i)
          (in_train[pidx[rs.passages[i]]] ? rows.train : rows.test).push_back(i);
        bool ok = rows.test.size() >= 2;
        for (std::size_t v = 0; ok && v < rs.responses.cols(); ++v) {
          const double first = rs.responses(rows.test[0], v);
          ok = std::any_of(rows.test.begin(), rows.test.end(),
                           [&](std::size_t i) { return rs.responses(i, v) != first; });
        }
        if (ok) break;
        if (attempt >= 100) throw ContractError("eval_brain_response: no split with test variance in every voxel");
        ++resampled;
      }
      plan[s].push_back(std::move(rows));
    }
  }
  if (resampled) r.warnings.push_back(std::to_string(resampled) + " split(s) resampled for zero test variance");

  std::size_t degenerate = 0;
  nlohmann::ordered_json split_scores = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < L; ++l) {
    std::vector<double> scores;
    for (std::size_t s = 0; s < sets.size(); ++s) {
      const ResponseSet& rs = sets[s];
      const double ceiling = std::accumulate(rs.ceilings.begin(), rs.ceilings.end(), 0.0) /
                             static_cast<double>(rs.ceilings.size());
      for (const auto& rows : plan[s]) {
        const RidgeModel ridge = fit_ridge(take_rows(layer_reps[s][l], rows.train),
                                           take_rows(rs.responses, rows.train), opt.ridge_lambda);
        const Tensor pred = predict(ridge, take_rows(layer_reps[s][l], rows.test));
        double sum_r = 0.0;
        for (std::size_t v = 0; v < rs.responses.cols(); ++v) {
          std::vector<double> a, b;
          for (std::size_t i = 0; i < rows.test.size(); ++i) {
            a.push_back(pred(i, v));
            b.push_back(rs.responses(rows.test[i], v));
          }
          try {
            sum_r += pearson(a, b);
          } catch (const NumericError&) {
            ++degenerate;  // constant prediction: no linear signal, counts as r = 0
          }
        }
        scores.push_back(sum_r / static_cast<double>(rs.responses.cols()) / ceiling);
      }
    }
    LayerScore ls;
    ls.layer = l;
    ls.score = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
    split_scores.push_back(scores);
    r.per_layer.push_back(ls);
  }
  if (degenerate) r.warnings.push_back(std::to_string(degenerate) + " voxel fits had constant predictions (r = 0)");
  finalize_selection(r, false);
  r.details["normalization"] = "mean voxel correlation / mean voxel ceiling";
  r.details["ridge_lambda"] = opt.ridge_lambda;
  r.details["train_fraction"] = opt.train_fraction;
  r.details["stimulus_sets"] = sets.size();
  r.details["split_scores"] = split_scores;
  return r;
}

}  // namespace glab
