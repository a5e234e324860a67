#include "glab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "glab/error.hpp"
#include "glab/fvec.hpp"
#include "glab/rng.hpp"

namespace glab {

namespace {

struct AttributeList {
  const char* type;
  std::vector<std::string> values;
};

const std::vector<AttributeList>& attribute_lists() {
  static const std::vector<AttributeList> lists = {
      {"size", {"small", "big", "tiny", "huge"}},
      {"color", {"red", "blue", "green", "yellow", "purple", "orange", "pink", "brown", "black", "white", "gray", "teal"}},
      {"shape", {"round", "square", "flat", "long", "pointed", "curved"}},
      {"material", {"wooden", "metal", "plastic", "glass", "stony", "papery"}},
  };
  return lists;
}

const std::vector<std::string>& verb_list() {
  static const std::vector<std::string> verbs = {"runs",  "sits",  "flies", "rolls", "jumps",
                                                 "falls", "spins", "floats", "swims", "glows"};
  return verbs;
}

const std::map<std::string, std::string>& synonym_table() {
  static const std::map<std::string, std::string> syn = {
      {"small", "little"}, {"big", "large"}, {"round", "circular"},
      {"red", "crimson"},  {"runs", "sprints"}, {"sits", "rests"},
  };
  return syn;
}

std::string pseudo_word(Rng& rng, const std::set<std::string>& taken) {
  static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh"};
  static const char* vowels[] = {"a", "e", "i", "o", "u"};
  for (;;) {
    std::string w;
    const std::size_t syllables = 2 + rng.index(2);
    for (std::size_t s = 0; s < syllables; ++s) {
      w += onsets[rng.index(std::size(onsets))];
      w += vowels[rng.index(std::size(vowels))];
    }
    if (!taken.count(w)) return w;
  }
}

double indicator_cosine(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.empty() || b.empty()) return 0.0;
  std::size_t shared = 0;
  for (std::size_t x : a)
    if (std::binary_search(b.begin(), b.end(), x)) ++shared;
  return static_cast<double>(shared) / std::sqrt(static_cast<double>(a.size() * b.size()));
}

struct Builder {
  SynthWorld& world;
  // word indices by role
  std::vector<std::vector<std::size_t>> concept_words;            // cid -> noun word ids
  std::map<std::size_t, std::vector<std::size_t>> slot_words;     // slot -> adjective/verb word ids
  std::vector<std::vector<std::size_t>> type_slots;               // attribute type -> slots
  std::vector<std::size_t> action_slots;
  std::size_t fn_a = 0, fn_with = 0, fn_period = 0;
};

// Scene = main object, optional second object, action.
struct Scene {
  std::size_t obj1 = 0;
  std::optional<std::size_t> obj2;
  std::size_t action = 0;
};

Scene sample_scene(const Builder& b, Rng& rng, const SynthOptions& opt) {
  Scene s;
  s.obj1 = rng.index(b.world.concepts.size());
  if (rng.bernoulli(opt.second_object_prob)) s.obj2 = rng.index(b.world.concepts.size());
  s.action = b.action_slots[rng.index(b.action_slots.size())];
  return s;
}

const std::string& pick(const Builder& b, const std::vector<std::size_t>& ids, Rng& rng) {
  return b.world.lexicon[ids[rng.index(ids.size())]].text;
}

void describe_object(const Builder& b, std::size_t cid, Rng& rng, const SynthOptions& opt,
                     std::vector<std::string>& out) {
  const auto& slots = b.world.concepts[cid];
  for (std::size_t slot : slots) {  // slots are stored in type order: size, color, shape, material
    if (rng.bernoulli(opt.adjective_prob)) out.push_back(pick(b, b.slot_words.at(slot), rng));
  }
  out.push_back(pick(b, b.concept_words[cid], rng));
}

std::string caption_for(const Builder& b, const Scene& s, Rng& rng, const SynthOptions& opt) {
  std::vector<std::string> words{"a"};
  describe_object(b, s.obj1, rng, opt, words);
  words.push_back(pick(b, b.slot_words.at(s.action), rng));
  if (s.obj2) {
    words.push_back("with");
    words.push_back("a");
    describe_object(b, *s.obj2, rng, opt, words);
  }
  std::string text;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) text.push_back(' ');
    text += words[i];
  }
  return text + " .";
}

std::vector<double> scene_slots(const SynthWorld& w, const Scene& s) {
  std::vector<double> g(w.slot_names.size(), 0.0);
  for (std::size_t slot : w.concepts[s.obj1]) g[slot] += 1.0;
  if (s.obj2)
    for (std::size_t slot : w.concepts[*s.obj2]) g[slot] += 0.5;
  g[s.action] += 0.5;
  return g;
}

}  // namespace

std::vector<std::string> SynthWorld::content_words() const {
  std::vector<std::string> out;
  for (const auto& w : lexicon)
    if (w.cls != WordClass::Function) out.push_back(w.text);
  return out;
}

const SynthWord* SynthWorld::find(const std::string& word) const {
  for (const auto& w : lexicon)
    if (w.text == word) return &w;
  return nullptr;
}

namespace {

Builder build_lexicon(SynthWorld& world, Rng& rng, std::size_t vocab_size) {
  Builder b{world, {}, {}, {}, {}};
  std::set<std::string> taken;
  const auto& syn = synonym_table();

  auto add_word = [&](std::string text, WordClass cls, std::string type, std::size_t cid,
                      std::vector<std::size_t> ind) {
    taken.insert(text);
    world.lexicon.push_back(SynthWord{std::move(text), cls, std::move(type), cid, std::move(ind)});
    return world.lexicon.size() - 1;
  };

  // Attribute values, distributed over types by a fixed share of the budget.
  const std::size_t adj_budget = std::max<std::size_t>(8, (3 * vocab_size + 5) / 10);
  const double shares[] = {0.15, 0.40, 0.25, 0.20};
  const std::size_t verb_budget = std::clamp<std::size_t>(vocab_size / 10, 2, verb_list().size());
  std::size_t words_used = 0;
  for (std::size_t t = 0; t < attribute_lists().size(); ++t) {
    const auto& list = attribute_lists()[t];
    world.attribute_types.push_back(list.type);
    const std::size_t n_values = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(shares[t] * static_cast<double>(adj_budget))), 2, list.values.size());
    b.type_slots.emplace_back();
    for (std::size_t v = 0; v < n_values; ++v) {
      const std::size_t slot = world.slot_names.size();
      world.slot_names.push_back(std::string(list.type) + ":" + list.values[v]);
      b.type_slots.back().push_back(slot);
      b.slot_words[slot].push_back(add_word(list.values[v], WordClass::Adjective, list.type, slot, {slot}));
      ++words_used;
      if (auto it = syn.find(list.values[v]); it != syn.end()) {
        b.slot_words[slot].push_back(add_word(it->second, WordClass::Adjective, list.type, slot, {slot}));
        ++words_used;
      }
    }
  }
  world.attribute_types.push_back("action");
  for (std::size_t v = 0; v < verb_budget; ++v) {
    const std::size_t slot = world.slot_names.size();
    world.slot_names.push_back("action:" + verb_list()[v]);
    b.action_slots.push_back(slot);
    b.slot_words[slot].push_back(add_word(verb_list()[v], WordClass::Verb, "action", slot, {slot}));
    ++words_used;
    if (auto it = syn.find(verb_list()[v]); it != syn.end()) {
      b.slot_words[slot].push_back(add_word(it->second, WordClass::Verb, "action", slot, {slot}));
      ++words_used;
    }
  }

  // Object concepts fill the rest; every fifth cid gets a synonym.
  taken.insert("a");
  taken.insert("with");
  const std::size_t noun_budget = vocab_size > words_used + 4 ? vocab_size - words_used : 4;
  std::size_t nouns = 0;
  while (nouns < noun_budget) {
    const std::size_t cid = world.concepts.size();
    std::vector<std::size_t> slots;
    for (const auto& ts : b.type_slots) slots.push_back(ts[rng.index(ts.size())]);
    world.concepts.push_back(slots);
    b.concept_words.emplace_back();
    const std::size_t names = (cid % 5 == 4 && nouns + 2 <= noun_budget) ? 2 : 1;
    for (std::size_t k = 0; k < names; ++k) {
      b.concept_words.back().push_back(add_word(pseudo_word(rng, taken), WordClass::Noun, "object", cid, slots));
      ++nouns;
    }
  }
  b.fn_a = add_word("a", WordClass::Function, "", 0, {});
  b.fn_with = add_word("with", WordClass::Function, "", 0, {});
  b.fn_period = add_word(".", WordClass::Function, "", 0, {});
  return b;
}

}  // namespace

SynthWorld synth_world(std::uint64_t seed, std::size_t n_pairs, std::size_t vocab_size, std::size_t feature_dim,
                       const SynthOptions& options) {
  if (vocab_size < 20) throw ContractError("synth_world: vocab_size must be >= 20");
  if (feature_dim < 8) throw ContractError("synth_world: feature_dim must be >= 8");
  SynthWorld world;
  world.seed = seed;
  Rng lex_rng = Rng::stream(seed, "synth.lexicon");
  Builder b = build_lexicon(world, lex_rng, vocab_size);

  // Slot embedding directions, roughly unit norm.
  Rng emb_rng = Rng::stream(seed, "synth.embedding");
  const std::size_t n_slots = world.slot_names.size();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  Tensor directions(Shape{n_slots, feature_dim});
  for (double& v : directions.storage()) v = emb_rng.normal() * inv_sqrt_d;

  Rng scene_rng = Rng::stream(seed, "synth.scenes");
  world.features = Tensor(Shape{n_pairs, feature_dim});
  world.records.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const Scene s = sample_scene(b, scene_rng, options);
    CaptionRecord rec;
    rec.id = "s" + std::to_string(i);
    rec.caption = caption_for(b, s, scene_rng, options);
    rec.fvec_index = i;
    world.records.push_back(std::move(rec));
    const auto g = scene_slots(world, s);
    auto row = world.features.row(i);
    for (std::size_t slot = 0; slot < n_slots; ++slot) {
      if (g[slot] == 0.0) continue;
      for (std::size_t c = 0; c < feature_dim; ++c) row[c] += g[slot] * directions(slot, c);
    }
    for (std::size_t c = 0; c < feature_dim; ++c) row[c] += options.noise * inv_sqrt_d * scene_rng.normal();
  }

  const auto content = world.content_words();
  world.similarity = Tensor(Shape{content.size(), content.size()});
  std::vector<const SynthWord*> cw;
  for (const auto& w : content) cw.push_back(world.find(w));
  for (std::size_t i = 0; i < cw.size(); ++i)
    for (std::size_t j = 0; j < cw.size(); ++j)
      world.similarity(i, j) = i == j ? 1.0 : indicator_cosine(cw[i]->indicators, cw[j]->indicators);
  return world;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark datasets

namespace {

const char* pos_tag(WordClass c) {
  switch (c) {
    case WordClass::Noun: return "NOUN";
    case WordClass::Adjective: return "ADJ";
    case WordClass::Verb: return "VERB";
    case WordClass::Function: return "DET";
  }
  return "X";
}

std::string pair_category(const SynthWord& a, const SynthWord& b) {
  if (a.cls == WordClass::Noun && b.cls == WordClass::Noun) return "noun";
  if (a.cls == WordClass::Verb && b.cls == WordClass::Verb) return "verb";
  if (a.attribute_type == "color" && b.attribute_type == "color") return "color";
  return "mixed";
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw IngestError("cannot open " + p.string() + " for writing");
  out.precision(17);
  return out;
}

}  // namespace

void write_synth_world(const SynthWorld& world, const std::filesystem::path& dir, std::uint64_t dataset_seed) {
  std::filesystem::create_directories(dir);
  write_corpus_jsonl(dir / "corpus.jsonl", world.records);
  write_fvec_file(dir / "features.fvec", world.features);

  const auto content = world.content_words();
  std::vector<const SynthWord*> cw;
  for (const auto& w : content) cw.push_back(world.find(w));

  {
    auto sim = open_out(dir / "similarity.tsv");
    auto rel = open_out(dir / "relatedness.tsv");
    for (std::size_t i = 0; i < cw.size(); ++i) {
      for (std::size_t j = i + 1; j < cw.size(); ++j) {
        sim << cw[i]->text << '\t' << cw[j]->text << '\t' << world.similarity(i, j) << '\n';
        rel << cw[i]->text << '\t' << cw[j]->text << '\t' << world.similarity(i, j) << '\t'
            << pair_category(*cw[i], *cw[j]) << '\n';
      }
    }
  }

  Rng rng = Rng::stream(dataset_seed, "synth.datasets");

  // Lexical relations, CogALex-style labels.
  {
    std::vector<std::tuple<std::string, std::string, std::string>> pairs;
    std::set<std::pair<std::string, std::string>> seen;
    auto add = [&](const SynthWord& a, const SynthWord& b, const char* label) {
      auto key = std::minmax(a.text, b.text);
      if (a.text == b.text || !seen.insert({key.first, key.second}).second) return;
      pairs.emplace_back(a.text, b.text, label);
    };
    for (const auto* a : cw) {
      for (const auto* b : cw) {
        if (a == b) continue;
        const bool same_concept = a->cls == b->cls && a->concept_id == b->concept_id;
        if (same_concept && a->cls != WordClass::Function) add(*a, *b, "SYN");
        else if (a->cls == WordClass::Adjective && b->cls == WordClass::Adjective &&
                 a->attribute_type == b->attribute_type)
          add(*a, *b, "ANT");
        else if (a->cls == WordClass::Noun && b->cls == WordClass::Adjective &&
                 std::binary_search(a->indicators.begin(), a->indicators.end(), b->concept_id)) {
          if (b->attribute_type == "color") add(*a, *b, "HYPER");
          else if (b->attribute_type == "material") add(*a, *b, "PART_OF");
        }
      }
    }
    const std::size_t related = pairs.size();
    for (std::size_t tries = 0; pairs.size() < related * 3 && tries < related * 50; ++tries) {
      const auto* a = cw[rng.index(cw.size())];
      const auto* b = cw[rng.index(cw.size())];
      if (indicator_cosine(a->indicators, b->indicators) > 0.0) continue;
      add(*a, *b, "RANDOM");
    }
    rng.shuffle(pairs);
    auto out = open_out(dir / "relations.tsv");
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& [w1, w2, label] = pairs[i];
      out << w1 << '\t' << w2 << '\t' << label << '\t' << (i % 2 == 0 ? "train" : "test") << '\n';
    }
  }

  // Feature norms: attribute slots as features.
  {
    auto out = open_out(dir / "norms.tsv");
    for (const auto* w : cw) {
      for (std::size_t slot : w->indicators) out << w->text << '\t' << world.slot_names[slot] << '\t' << 3 << '\n';
      out << w->text << '\t' << "is_" << (w->cls == WordClass::Noun ? std::string("object") : w->attribute_type)
          << '\t' << 1 << '\n';
    }
  }

  {
    auto out = open_out(dir / "pos.tsv");
    for (const auto* w : cw) out << w->text << '\t' << pos_tag(w->cls) << '\n';
  }

  // Sentence pairs: true descriptions vs. versions with one attribute or the
  // verb swapped for a word of the wrong class.
  {
    auto out = open_out(dir / "sentence_pairs.tsv");
    std::vector<const SynthWord*> nouns, adjs, verbs;
    for (const auto* w : cw) {
      if (w->cls == WordClass::Noun) nouns.push_back(w);
      else if (w->cls == WordClass::Adjective) adjs.push_back(w);
      else if (w->cls == WordClass::Verb) verbs.push_back(w);
    }
    for (const auto* target : nouns) {
      const auto* distractor = nouns[rng.index(nouns.size())];
      if (distractor == target) continue;
      for (int k = 0; k < 3; ++k) {
        const auto* verb = verbs[rng.index(verbs.size())];
        const auto* adj = adjs[rng.index(adjs.size())];
        std::vector<std::string> orig{"a", target->text, verb->text, "."};
        std::vector<std::string> mod = orig;
        mod[2] = adj->text;
        auto join = [](const std::vector<std::string>& v) {
          std::string s;
          for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + v[i];
          return s;
        };
        out << target->text << '\t' << distractor->text << '\t' << join(orig) << '\t' << join(mod) << "\tnoun\n";
      }
    }
  }

  // Brain-response stand-in: passages of synthetic captions; voxel responses
  // are a random linear readout of scene slots plus noise.
  {
    SynthOptions opt;
    Builder b{const_cast<SynthWorld&>(world), {}, {}, {}, {}};
    // Rebuild the role indices from the lexicon.
    b.concept_words.resize(world.concepts.size());
    for (std::size_t i = 0; i < world.lexicon.size(); ++i) {
      const auto& w = world.lexicon[i];
      if (w.cls == WordClass::Noun) b.concept_words[w.concept_id].push_back(i);
      else if (w.cls == WordClass::Adjective || w.cls == WordClass::Verb) b.slot_words[w.concept_id].push_back(i);
      if (w.cls == WordClass::Verb &&
          std::find(b.action_slots.begin(), b.action_slots.end(), w.concept_id) == b.action_slots.end())
        b.action_slots.push_back(w.concept_id);
    }
    const std::size_t n_sent = 96, per_passage = 4, n_vox = 24;
    const std::size_t n_slots = world.slot_names.size();
    Tensor readout(Shape{n_slots, n_vox});
    for (double& v : readout.storage()) v = rng.normal();
    Tensor responses(Shape{n_sent, n_vox});
    Tensor clean(Shape{n_sent, n_vox});
    auto sent = open_out(dir / "brain_sentences.tsv");
    for (std::size_t i = 0; i < n_sent; ++i) {
      const Scene s = sample_scene(b, rng, opt);
      sent << "p" << i / per_passage << '\t' << caption_for(b, s, rng, opt) << '\n';
      const auto g = scene_slots(world, s);
      for (std::size_t v = 0; v < n_vox; ++v) {
        double y = 0.0;
        for (std::size_t slot = 0; slot < n_slots; ++slot) y += g[slot] * readout(slot, v);
        clean(i, v) = y;
        responses(i, v) = y + 1.0 * rng.normal();
      }
    }
    write_fvec_file(dir / "brain_responses.fvec", responses);
    auto ceil = open_out(dir / "brain_ceilings.tsv");
    for (std::size_t v = 0; v < n_vox; ++v) {
      double mc = 0, mr = 0;
      for (std::size_t i = 0; i < n_sent; ++i) { mc += clean(i, v); mr += responses(i, v); }
      mc /= n_sent;
      mr /= n_sent;
      double sxy = 0, sxx = 0, syy = 0;
      for (std::size_t i = 0; i < n_sent; ++i) {
        const double a = clean(i, v) - mc, c = responses(i, v) - mr;
        sxy += a * c;
        sxx += a * a;
        syy += c * c;
      }
      ceil << v << '\t' << std::max(1e-3, sxy / std::sqrt(sxx * syy)) << '\n';
    }
  }
}

}  // namespace glab
