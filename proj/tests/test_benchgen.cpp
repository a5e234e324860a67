#include <gtest/gtest.h>

#include <httplib.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "glab/benchgen.hpp"
#include "glab/corpus.hpp"
#include "glab/error.hpp"
#include "support.hpp"

using namespace glab;

namespace {

// Stable pseudo-random score in [1, 101) from the text bytes (FNV-1a).
double hashed_score(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return 1.0 + static_cast<double>(h % 100000) / 1000.0;
}

std::string canon(const std::string& s) { return join_tokens(tokenize(normalize_caption(s))); }

std::shared_ptr<MockBackend> hashed_backend() { return std::make_shared<MockBackend>(hashed_score); }

std::vector<std::string> sentences_for(const std::string& target, std::size_t n) {
  const std::vector<std::string> adj{"red", "small", "old", "wet", "soft"}, place{"table", "floor", "bed", "shelf", "grass"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back("the " + adj[i % 5] + " " + target + " is on the " + place[(i / 5) % 5]);
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Scorer, MockIsDeterministicAndCached) {
  ScorerClient c(std::make_shared<MockBackend>());
  EXPECT_DOUBLE_EQ(c.score("abcd"), 4.0);
  EXPECT_DOUBLE_EQ(c.score("abcd"), 4.0);
  EXPECT_EQ(c.backend_calls(), 1u);
  const auto v = c.score_many({"ab", "abcd", "ab", "xyz"});
  EXPECT_EQ(v, (std::vector<double>{2, 4, 2, 3}));
  EXPECT_EQ(c.backend_calls(), 2u);
  EXPECT_EQ(c.texts_fetched(), 3u);  // abcd was cached, ab collapsed
  EXPECT_THROW(c.score(""), ContractError);
}

TEST(Scorer, NegativeOrNonFiniteSurprisalIsProtocolError) {
  ScorerClient neg(std::make_shared<MockBackend>([](const std::string&) { return -1.0; }));
  EXPECT_THROW(neg.score("x"), ProtocolError);
  ScorerClient nan(std::make_shared<MockBackend>([](const std::string&) { return std::nan(""); }));
  EXPECT_THROW(nan.score("x"), ProtocolError);
}

TEST(Scorer, PerTokenDividesByWordCount) {
  ScorerOptions o;
  o.per_token = true;
  ScorerClient c(std::make_shared<MockBackend>([](const std::string&) { return 6.0; }), o);
  EXPECT_DOUBLE_EQ(c.score("a b c ."), 1.5);
}

TEST(Scorer, CacheFileRoundTripsBitwise) {
  const auto dir = glab::testing::temp_dir("scorer_cache");
  ScorerClient a(std::make_shared<MockBackend>([](const std::string& s) { return 1.0 / 3.0 + s.size(); }));
  const auto va = a.score_many({"one", "two words", "with\ttab-free text"});
  a.save_cache(dir / "c.tsv");
  ScorerClient b(std::make_shared<MockBackend>([](const std::string&) -> double { throw ScoringError("offline"); }));
  b.load_cache(dir / "c.tsv");
  EXPECT_EQ(b.score_many({"one", "two words", "with\ttab-free text"}), va);
  EXPECT_EQ(b.backend_calls(), 0u);
}

TEST(Scorer, ModelBackendIsNegativeLogprob) {
  const Corpus c = glab::testing::tiny_corpus(1);
  auto model = std::make_shared<Model>(glab::testing::tiny_model(c, glab::testing::all_variants()[0], 2));
  ScorerClient client(std::make_shared<ModelBackend>(model));
  const std::string text = c.records[3].caption;
  std::vector<int> seq{Vocab::kBos};
  for (int id : model->vocab().encode(text)) seq.push_back(id);
  EXPECT_DOUBLE_EQ(client.score(text), -sequence_logprob(*model, seq));
  auto clip = std::make_shared<Model>(glab::testing::tiny_model(c, glab::testing::all_variants()[4], 2));
  EXPECT_THROW(ModelBackend{clip}.score_one(text), CapabilityError);
}

TEST(Scorer, HttpRoundTripMatchesInProcess) {
  ScorerServer server(hashed_backend());
  HttpOptions o;
  o.port = server.start();
  o.batch_size = 3;
  auto http = std::make_shared<HttpBackend>(o);
  std::vector<std::string> texts;
  for (int i = 0; i < 10; ++i) texts.push_back("text number " + std::to_string(i));
  const auto got = http->score_batch(texts);
  ASSERT_EQ(got.size(), texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) EXPECT_EQ(got[i], hashed_score(texts[i]));
  EXPECT_EQ(http->requests_sent(), 4u);

  httplib::Client raw("127.0.0.1", o.port);
  auto single = raw.Post("/score", R"({"id":"q","text":"abc"})", "application/json");
  ASSERT_TRUE(single);
  EXPECT_EQ(single->status, 200);
  const auto j = nlohmann::json::parse(single->body);
  EXPECT_EQ(j["id"], "q");
  EXPECT_EQ(j["surprisal"].get<double>(), hashed_score("abc"));
  auto bad = raw.Post("/score", "not json", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  server.stop();
}

TEST(Scorer, ClosedPortIsScoringError) {
  int port = 0;
  {
    ScorerServer s(hashed_backend());
    port = s.start();
    s.stop();
  }
  HttpOptions o;
  o.port = port;
  o.attempts = 2;
  o.backoff = std::chrono::milliseconds(1);
  o.timeout = std::chrono::milliseconds(300);
  EXPECT_THROW(HttpBackend(o).score_batch({"x"}), ScoringError);
}

TEST(Scorer, MalformedReplyIsProtocolError) {
  httplib::Server srv;
  srv.Post("/score_batch", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"([{"id":"nope","surprisal":1.0}])", "application/json");
  });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread t([&] { srv.listen_after_bind(); });
  HttpOptions o;
  o.port = port;
  EXPECT_THROW(HttpBackend(o).score_batch({"x"}), ProtocolError);
  srv.stop();
  t.join();
}

// ---------------------------------------------------------------------------

TEST(BaseSelection, ForcedOrderAndDegenerateN) {
  const auto sents = sentences_for("ball", 6);
  // Make sentence 4 the unique minimum of S(orig) - S(dist).
  const std::string special = canon(sents[4]);
  ScorerClient c(std::make_shared<MockBackend>([&](const std::string& s) { return s == special ? 0.5 : 10.0; }));
  const auto sel = select_base_sentences(c, "ball", "cup", sents, 3);
  ASSERT_EQ(sel.selected.size(), 3u);
  EXPECT_EQ(sel.selected[0].sentence, special);
  EXPECT_TRUE(sel.warnings.empty());
  // Remaining ties keep input order.
  EXPECT_EQ(sel.selected[1].sentence, canon(sents[0]));

  const auto all = select_base_sentences(c, "ball", "cup", sents, 50);
  EXPECT_EQ(all.selected.size(), 6u);
  EXPECT_EQ(all.warnings.size(), 1u);
}

TEST(BaseSelection, IneligibleSentencesCounted) {
  ScorerClient c(hashed_backend());
  const auto sel = select_base_sentences(c, "ball", "cup", {"a ball", "no target", "ball and ball", "The BALL ."}, 5);
  EXPECT_EQ(sel.ineligible, 2u);
  EXPECT_EQ(sel.selected.size(), 2u);
}

TEST(BaseSelection, MatchesExhaustiveSort) {
  for (int trial = 0; trial < 10; ++trial) {
    auto sents = sentences_for("ball", 25);
    for (auto& s : sents) s += " " + std::to_string(trial);
    ScorerClient c(hashed_backend());
    const auto sel = select_base_sentences(c, "ball", "cup", sents, 20);
    std::vector<std::pair<double, std::size_t>> oracle;
    for (std::size_t i = 0; i < sents.size(); ++i) {
      const std::string o = canon(sents[i]);
      std::string d = o;
      d.replace(d.find(" ball "), 6, " cup ");
      oracle.push_back({hashed_score(o) - hashed_score(d), i});
    }
    std::sort(oracle.begin(), oracle.end());
    for (std::size_t k = 0; k < 20; ++k)
      EXPECT_EQ(sel.selected[k].sentence, canon(sents[oracle[k].second]));
  }
}

TEST(MakePair, HandArithmetic) {
  // One non-target position, two candidates.
  std::map<std::string, double> table{{"the ball", 2.0}, {"the cup", 1.0}, {"x cup", 3.0}, {"y cup", 5.0}};
  ScorerClient c(std::make_shared<MockBackend>([&](const std::string& s) { return table.at(s); }));
  const CandidatePair p = make_pair(c, "ball", "cup", "The ball", {"x", "y"});
  EXPECT_EQ(p.modified, "x ball");
  EXPECT_EQ(p.original, "the ball");
  EXPECT_DOUBLE_EQ(p.criterion, 3.5);
  EXPECT_DOUBLE_EQ(benchgen_criterion(5.0, 1.0), 6.5);
  EXPECT_EQ(p.position, 0u);
}

TEST(MakePair, CandidateEqualToExistingWordIsSkipped) {
  std::map<std::string, double> table{{"the ball", 2.0}, {"the cup", 1.0}, {"x cup", 3.0}};
  ScorerClient c(std::make_shared<MockBackend>([&](const std::string& s) { return table.at(s); }));
  EXPECT_EQ(make_pair(c, "ball", "cup", "the ball", {"the", "x"}).modified, "x ball");
  EXPECT_THROW(make_pair(c, "ball", "cup", "the ball", {"the"}), ConstructionError);
  EXPECT_THROW(make_pair(c, "ball", "cup", "the ball", {}), ContractError);
  EXPECT_THROW(make_pair(c, "ball", "cup", "ball ball", {"x"}), ContractError);
}

TEST(MakePair, MatchesBruteForceMinimizer) {
  std::vector<std::string> vocab;
  for (int i = 0; i < 20; ++i) vocab.push_back("v" + std::to_string(i));
  vocab.push_back("red");  // equal to an existing word at one position
  ScorerClient c(hashed_backend());
  const std::string sentence = "a red ball on grass";  // 5 tokens, 4 editable positions
  const CandidatePair p = make_pair(c, "ball", "cup", sentence, vocab);
  const auto toks = tokenize(normalize_caption(sentence));
  double best = 1e300;
  std::string best_text;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i] == "ball") continue;
    for (const auto& w : vocab) {
      if (w == toks[i]) continue;
      auto d = toks, m = toks;
      d[2] = "cup";
      d[i] = w;
      m[i] = w;
      const double crit = 1.5 * hashed_score(join_tokens(d)) - hashed_score("a red cup on grass");
      if (crit < best) best = crit, best_text = join_tokens(m);
    }
  }
  EXPECT_EQ(p.modified, best_text);
  EXPECT_DOUBLE_EQ(p.criterion, best);
  EXPECT_NO_THROW(audit_candidates({p}));
}

TEST(Audit, CatchesTampering) {
  ScorerClient c(hashed_backend());
  CandidatePair p = make_pair(c, "ball", "cup", "a red ball", {"big", "blue"});
  EXPECT_NO_THROW(audit_candidates({p}));
  CandidatePair q = p;
  q.criterion += 1e-9;
  EXPECT_THROW(audit_candidates({q}), ContractError);
  q = p;
  q.modified = "a red cup";  // edits the target
  EXPECT_THROW(audit_candidates({q}), ContractError);
  q = p;
  q.modified = "big blue ball";  // two positions
  EXPECT_THROW(audit_candidates({q}), ContractError);
}

// ---------------------------------------------------------------------------

TEST(Build, TwentyPairsPerTargetDistractor) {
  ScorerClient c(hashed_backend());
  const std::vector<TargetSpec> targets{{"ball", "noun", {"cup"}}};
  const std::map<std::string, std::vector<std::string>> sents{{"ball", sentences_for("ball", 25)}};
  const auto res = build_benchmark(c, targets, sents, {"big", "blue", "ball", "cup", "x"});
  EXPECT_EQ(res.set.pairs.size(), 20u);
  EXPECT_EQ(res.failures, 0u);
  for (const auto& p : res.pairs) {
    EXPECT_NE(p.replacement, "ball");
    EXPECT_NE(p.replacement, "cup");
  }
  audit_candidates(res.pairs);
}

TEST(Build, CountsScaleAndWarmCacheIsSilentAndBitwiseStable) {
  const std::vector<TargetSpec> targets{
      {"ball", "noun", {"cup", "shoe"}}, {"run", "verb", {"eat", "sit"}}, {"red", "adj", {"soft", "old"}}};
  std::map<std::string, std::vector<std::string>> sents;
  for (const auto& t : targets) sents[t.word] = sentences_for(t.word, 22);
  sents["red"] = sentences_for("red", 22);
  for (auto& s : sents["red"]) s = "a red thing " + std::to_string(&s - sents["red"].data());
  const std::vector<std::string> vocab{"big", "blue", "green", "dog"};
  const auto dir = glab::testing::temp_dir("build");

  ScorerClient cold(hashed_backend());
  const auto a = build_benchmark(cold, targets, sents, vocab);
  EXPECT_EQ(a.set.pairs.size(), 3u * 2u * 20u);
  write_sentence_pairs(dir / "a.tsv", a.set);
  cold.save_cache(dir / "cache.tsv");
  // Grouped by POS, stable within a group.
  EXPECT_TRUE(std::is_sorted(a.set.pairs.begin(), a.set.pairs.end(),
                             [](const auto& x, const auto& y) { return x.pos < y.pos; }));

  ScorerClient warm(std::make_shared<MockBackend>([](const std::string&) -> double { throw ScoringError("no"); }));
  warm.load_cache(dir / "cache.tsv");
  const auto b = build_benchmark(warm, targets, sents, vocab);
  EXPECT_EQ(warm.backend_calls(), 0u);
  write_sentence_pairs(dir / "b.tsv", b.set);
  EXPECT_EQ(read_file(dir / "a.tsv"), read_file(dir / "b.tsv"));
}

TEST(Build, ParsesTargetsAndSentences) {
  std::stringstream t("ball\tnoun\tcup, shoe\nrun\tverb\teat\n");
  const auto specs = parse_targets(t, "t");
  ASSERT_EQ(specs.size(), 2u);
  EXPECT_EQ(specs[0].distractors, (std::vector<std::string>{"cup", "shoe"}));
  std::stringstream bad("ball\tnoun\tball\n");
  EXPECT_THROW(parse_targets(bad, "t"), IngestError);
  std::stringstream s("ball\tthe ball\nball\ta ball\nrun\twe run\n");
  const auto m = parse_target_sentences(s, "s");
  EXPECT_EQ(m.at("ball").size(), 2u);
  EXPECT_EQ(frequent_words({"b a b .", "c b a"}, 2), (std::vector<std::string>{"b", "a"}));
}
