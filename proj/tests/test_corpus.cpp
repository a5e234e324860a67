#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "glab/corpus.hpp"
#include "glab/error.hpp"
#include "glab/fvec.hpp"
#include "glab/synth.hpp"
#include "support.hpp"

using namespace glab;

namespace {

std::vector<CaptionRecord> records(std::initializer_list<const char*> caps) {
  std::vector<CaptionRecord> out;
  std::size_t i = 0;
  for (const char* c : caps) out.push_back({"r" + std::to_string(i), c, i}), ++i;
  return out;
}

std::multiset<int> word_multiset(const std::vector<CaptionRecord>& recs, const Vocab& v) {
  std::multiset<int> m;
  for (const auto& r : recs)
    for (const auto& t : tokenize(r.caption))
      if (is_word_token(t)) m.insert(v.id(t));
  return m;
}

}  // namespace

TEST(Tokenizer, NormalizeAndSplit) {
  EXPECT_EQ(normalize_caption("  A  Dog\tRuns\n"), "a dog runs");
  EXPECT_EQ(tokenize("a dog's ball, red."), (std::vector<std::string>{"a", "dog's", "ball", ",", "red", "."}));
  EXPECT_TRUE(is_word_token("dog"));
  EXPECT_FALSE(is_word_token("."));
  EXPECT_EQ(count_tokens("A dog ."), 3u);
}

TEST(Vocab, BuildEnumeratesTokensWithSpecials) {
  const Vocab v = Vocab::build(records({"a dog . a cat ."}), 1);
  EXPECT_EQ(v.size(), 8u);
  for (const char* t : {"a", "dog", "cat", "."}) EXPECT_TRUE(v.contains(t)) << t;
  EXPECT_EQ(v.token(Vocab::kPad), "[PAD]");
  EXPECT_EQ(v.token(Vocab::kCls), "[CLS]");
}

TEST(Vocab, MinCountFilters) {
  const Vocab v = Vocab::build(records({"a dog . a cat ."}), 2);
  EXPECT_EQ(v.size(), 6u);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_TRUE(v.contains("."));
  EXPECT_FALSE(v.contains("dog"));
  EXPECT_EQ(v.id("dog"), Vocab::kUnk);
  EXPECT_THROW(Vocab::build(records({"a"}), 0), ContractError);
}

TEST(Vocab, FrequencyOrderAndRoundTrip) {
  const Vocab v = Vocab::build(records({"b b b a a c"}), 1);
  EXPECT_EQ(v.token(4), "b");
  EXPECT_EQ(v.token(5), "a");
  EXPECT_EQ(v.decode(v.encode("C a B zzz")), "c a b [UNK]");
  const Vocab w = Vocab::from_tokens(v.tokens());
  EXPECT_EQ(w.tokens(), v.tokens());
  EXPECT_THROW(Vocab::from_tokens({"x", "y"}), ContractError);
}

TEST(Examples, FullCaptionKeepsAllTokens) {
  const auto recs = records({"a red ball rolls ."});
  const Vocab v = Vocab::build(recs, 1);
  const auto ex = make_examples(recs, Regime::FullCaption, v);
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0].tokens, v.encode("a red ball rolls ."));
  EXPECT_EQ(ex[0].feature_row, 0u);
}

TEST(Examples, SingleWordAndWordOnlyRecoverWordMultiset) {
  const auto w = synth_world(3, 50, 20, 8);
  const Vocab v = Vocab::build(w.records, 1);
  const auto truth = word_multiset(w.records, v);
  for (Regime r : {Regime::SingleWord, Regime::WordOnly}) {
    std::multiset<int> got;
    for (const auto& e : make_examples(w.records, r, v)) {
      if (r == Regime::WordOnly) {
        ASSERT_EQ(e.tokens.size(), 2u);
        EXPECT_EQ(e.tokens[0], Vocab::kCls);
        EXPECT_FALSE(e.feature_row.has_value());
        got.insert(e.tokens[1]);
      } else {
        ASSERT_EQ(e.tokens.size(), 1u);
        got.insert(e.tokens[0]);
      }
    }
    EXPECT_EQ(got, truth) << regime_name(r);
  }
}

TEST(Examples, ContextWindowSlides) {
  const auto recs = records({"a b c d e .", "x y"});
  const Vocab v = Vocab::build(recs, 1);
  const auto ex = make_examples(recs, Regime::ContextWindow, v, 3);
  ASSERT_EQ(ex.size(), 4u);  // 3 windows over a..e, 1 short caption
  EXPECT_EQ(ex[0].tokens, v.encode("a b c"));
  EXPECT_EQ(ex[2].tokens, v.encode("c d e"));
  EXPECT_EQ(ex[3].tokens, v.encode("x y"));
  EXPECT_THROW(make_examples(recs, Regime::ContextWindow, v, 0), ContractError);
}

TEST(Examples, PureFunction) {
  const auto w = synth_world(4, 40, 20, 8);
  const Vocab v = Vocab::build(w.records, 1);
  for (Regime r : {Regime::FullCaption, Regime::SingleWord, Regime::ContextWindow, Regime::WordOnly})
    EXPECT_EQ(make_examples(w.records, r, v), make_examples(w.records, r, v));
}

TEST(Regime, NamesRoundTrip) {
  for (Regime r : {Regime::FullCaption, Regime::SingleWord, Regime::ContextWindow, Regime::WordOnly})
    EXPECT_EQ(parse_regime(regime_name(r)), r);
  EXPECT_THROW(parse_regime("visual"), ContractError);
}

TEST(CorpusIo, JsonlErrorsCarryLineNumbers) {
  std::stringstream ok(R"({"id":"a","caption":"A Dog","fvec_index":0})"
                       "\n");
  const auto recs = parse_corpus_jsonl(ok, "x.jsonl");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].caption, "a dog");
  std::stringstream bad("{\"id\":\"a\",\"caption\":\"x\",\"fvec_index\":0}\n{\"id\":3}\n");
  try {
    parse_corpus_jsonl(bad, "x.jsonl");
    FAIL();
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("x.jsonl:2"), std::string::npos) << e.what();
  }
}

TEST(CorpusIo, LoadRespectsTokenBudgetAndIndexRange) {
  const auto dir = glab::testing::temp_dir("corpus_budget");
  const auto w = synth_world(5, 100, 20, 8);
  write_corpus_jsonl(dir / "c.jsonl", w.records);
  write_fvec_file(dir / "f.fvec", w.features);
  const Corpus all = load_corpus(dir / "c.jsonl", dir / "f.fvec");
  EXPECT_EQ(all.records.size(), 100u);
  EXPECT_EQ(all.feature_dim, 8u);
  const Corpus part = load_corpus(dir / "c.jsonl", dir / "f.fvec", 200);
  EXPECT_LE(part.token_count, 200u);
  EXPECT_GT(part.token_count + count_tokens(w.records[part.records.size()].caption), 200u);

  write_fvec_file(dir / "small.fvec", Tensor({3, 8}));
  EXPECT_THROW(load_corpus(dir / "c.jsonl", dir / "small.fvec"), IngestError);
}

// ---------------------------------------------------------------------------

TEST(Synth, DeterministicAndShaped) {
  const auto a = synth_world(7, 200, 30, 16), b = synth_world(7, 200, 30, 16);
  ASSERT_EQ(a.records.size(), 200u);
  EXPECT_EQ(a.features, b.features);
  for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(a.records[i].caption, b.records[i].caption);
  EXPECT_EQ(a.features.cols(), 16u);
  EXPECT_EQ(a.content_words().size(), 30u);
  EXPECT_NE(synth_world(8, 200, 30, 16).features, a.features);
}

TEST(Synth, SimilarityIsSymmetricWithUnitDiagonal) {
  const auto w = synth_world(7, 10, 25, 8);
  const auto& s = w.similarity;
  ASSERT_EQ(s.rows(), 25u);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    EXPECT_DOUBLE_EQ(s(i, i), 1.0);
    for (std::size_t j = 0; j < s.cols(); ++j) {
      EXPECT_DOUBLE_EQ(s(i, j), s(j, i));
      EXPECT_GE(s(i, j), 0.0);
    }
  }
}

TEST(Synth, WritesEveryDatasetDeterministically) {
  const auto d1 = glab::testing::temp_dir("synth1"), d2 = glab::testing::temp_dir("synth2");
  const auto w = synth_world(9, 120, 20, 8);
  write_synth_world(w, d1, 9);
  write_synth_world(w, d2, 9);
  for (const char* f : {"corpus.jsonl", "features.fvec", "similarity.tsv", "relatedness.tsv", "relations.tsv",
                        "norms.tsv", "pos.tsv", "sentence_pairs.tsv", "brain_sentences.tsv", "brain_responses.fvec",
                        "brain_ceilings.tsv"}) {
    ASSERT_TRUE(std::filesystem::exists(d1 / f)) << f;
    std::ifstream a(d1 / f, std::ios::binary), b(d2 / f, std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    EXPECT_EQ(sa.str(), sb.str()) << f;
  }
}

TEST(Synth, RejectsTinyWorlds) {
  EXPECT_THROW(synth_world(1, 10, 5, 8), ContractError);
  EXPECT_THROW(synth_world(1, 10, 20, 2), ContractError);
}
