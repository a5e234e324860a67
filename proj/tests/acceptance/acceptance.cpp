// Acceptance runner: one PASS/FAIL/SKIP line per criterion, nonzero exit on
// any FAIL. Every tolerance is pinned here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "glab/analysis.hpp"
#include "glab/benchgen.hpp"
#include "glab/cli.hpp"
#include "glab/error.hpp"
#include "glab/optim.hpp"
#include "glab/train.hpp"
#include "oracles.hpp"
#include "planted.hpp"
#include "support.hpp"

using namespace glab;
namespace fs = std::filesystem;
namespace pl = glab::planted;

namespace {

struct Outcome {
  enum Kind { Pass, Fail, Skip } kind = Fail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Outcome::Pass : Outcome::Fail, std::move(detail)}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

Outcome gradient_integrity(const fs::path&) {
  constexpr double kTol = 1e-4, kBudget = 120.0;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string where;
  std::size_t runs = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Corpus c = glab::testing::tiny_corpus(seed, 24);
    for (const auto& v : glab::testing::all_variants()) {
      Model m = glab::testing::tiny_model(c, v, seed, 2, 16);
      auto ex = make_examples(c.records, v.regime, m.vocab());
      ex.resize(std::min<std::size_t>(ex.size(), 4));
      Rng rng(seed);
      const auto gc = glab::testing::grad_check_model(m, ex, c.features, rng);
      ++runs;
      if (gc.max_rel_error > worst) {
        worst = gc.max_rel_error;
        where = v.name + "/" + gc.worst_param + "/seed " + std::to_string(seed);
      }
    }
  }
  const double secs = seconds_since(t0);
  return verdict(worst < kTol && secs < kBudget,
                 fmt("max rel error %.3g (< %.0e) at %s; %zu model checks; %.1f s (< %.0f s)", worst, kTol,
                     where.c_str(), runs, secs, kBudget));
}

Outcome loss_anchors(const fs::path&) {
  bool ok = true;
  double worst_ce = 0.0, worst_clip = 0.0;
  // Cross-entropy of uniform logits, directly and through a model whose
  // parameters are all zero (every logit is then exactly 0).
  for (std::size_t vocab : {2u, 7u, 100u, 5000u}) {
    Graph g;
    const double ce = cross_entropy(g.constant(Tensor({3, vocab}, 0.25)), {0, 1, 1}).value().item();
    worst_ce = std::max(worst_ce, std::abs(ce - std::log(static_cast<double>(vocab))));
  }
  {
    const Corpus c = glab::testing::tiny_corpus(3);
    Model m = glab::testing::tiny_model(c, glab::testing::all_variants()[0], 3);
    for (auto& p : m.params())
      for (auto& x : p->value.storage()) x = 0.0;
    auto ex = make_examples(c.records, Regime::FullCaption, m.vocab());
    ex.resize(8);
    Graph g;
    const double ce = loss_next_token(g, m, ex, c.features).value().item();
    worst_ce = std::max(worst_ce, std::abs(ce - std::log(static_cast<double>(m.vocab().size()))));
  }
  ok &= worst_ce < 1e-9;
  {
    const Corpus c = glab::testing::tiny_corpus(2);
    const glab::testing::Variant clip{"clip_word", Regime::SingleWord, FusionStyle::ClipContrastive};
    Model m = glab::testing::tiny_model(c, clip, 2);
    const auto ex = make_examples({c.records[0]}, Regime::SingleWord, m.vocab());
    for (std::size_t n : {1u, 2u, 8u, 64u}) {
      std::vector<TrainingExample> batch(n, ex[0]);
      Graph g;
      const double l = loss_clip(g, m, batch, c.features).value().item();
      worst_clip = std::max(worst_clip, std::abs(l - std::log(static_cast<double>(n))));
    }
  }
  ok &= worst_clip < 1e-6;
  const WarmupSchedule s;  // 5000 warmup steps to a peak of 1e-4
  const bool warm = s.lr_at(0) == 0.0 && s.lr_at(2500) == 5e-5 && s.lr_at(5000) == 1e-4 && s.lr_at(5001) == 1e-4 &&
                    s.lr_at(1000000) == 1e-4;
  ok &= warm;
  return verdict(ok, fmt("uniform CE err %.2g (< 1e-9); clip ln N err %.2g for N in {1,2,8,64} (< 1e-6); "
                         "warmup 0 / 5e-5 / 1e-4 exact: %s",
                         worst_ce, worst_clip, warm ? "yes" : "no"));
}

Outcome metric_oracles(const fs::path&) {
  constexpr int kTrials = 200;
  Rng rng(20);
  auto draw = [&](std::size_t n, bool ties) {
    std::vector<double> v(n);
    for (auto& x : v) x = ties ? static_cast<double>(rng.index(4)) : rng.normal();
    return v;
  };
  double sp = 0.0, like = 0.0;
  int map_mismatch = 0;
  double f1 = 0.0;
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t n = 3 + rng.index(28);
    auto constant = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; }); };
    std::vector<double> a, b;
    do {
      a = draw(n, t % 2);
      b = draw(n, t % 3 == 0);
    } while (constant(a) || constant(b));  // correlation is undefined there
    sp = std::max(sp, std::abs(spearman(a, b) - oracle::spearman(a, b)));
  }
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t F = 2 + rng.index(19);
    auto perm = rng.permutation(F);
    perm.resize(1 + rng.index(F - 1));
    std::sort(perm.begin(), perm.end());
    const auto scores = draw(F, t % 2);
    if (map_at_k(scores, perm) != oracle::map_at_k(scores, perm)) ++map_mismatch;
  }
  for (int t = 0; t < kTrials; ++t) {
    const int k = 2 + static_cast<int>(rng.index(4));
    std::vector<int> classes;
    for (int c = 0; c < k; ++c) classes.push_back(3 * c);
    const std::size_t n = 5 + rng.index(36);
    std::vector<int> pred(n), gold(n);
    for (std::size_t i = 0; i < n; ++i) {
      gold[i] = classes[rng.index(k)];
      pred[i] = rng.bernoulli(0.5) ? gold[i] : classes[rng.index(k)];
    }
    // Same counts, different float route (2tp / (2tp + fp + fn) vs P and R).
    f1 = std::max(f1, std::abs(macro_f1(pred, gold, classes) - oracle::macro_f1(pred, gold, classes)));
  }
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t n = 3 + rng.index(23);
    PairScores m, h;
    const auto mv = draw(n, t % 2), hv = draw(n, t % 3 == 0);
    for (std::size_t i = 0; i < n; ++i) {
      m[pair_key("a" + std::to_string(i), "b" + std::to_string(i))] = mv[i];
      h[pair_key("a" + std::to_string(i), "b" + std::to_string(i))] = hv[i];
    }
    const auto want = oracle::likeness(m, h);
    for (const auto& p : human_likeness(m, h)) like = std::max(like, std::abs(p.normalized - want.at(p.pair)));
  }
  return verdict(sp < 1e-9 && like < 1e-9 && f1 < 1e-12 && map_mismatch == 0,
                 fmt("%d instances each: spearman err %.2g, likeness err %.2g (< 1e-9); macro_f1 err %.2g (< 1e-12); "
                     "map_at_k mismatches %d (exact)",
                     kTrials, sp, like, f1, map_mismatch));
}

Outcome pls_correctness(const fs::path&) {
  Rng rng(40);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Tensor X = glab::testing::random_tensor({40, 8}, rng);
    const Tensor B = glab::testing::random_tensor({8, 3}, rng);
    Tensor Y(Shape{40, 3});
    for (std::size_t i = 0; i < 40; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double y = 0.5 * rng.normal() + static_cast<double>(j);
        for (std::size_t k = 0; k < 8; ++k) y += X(i, k) * B(k, j);
        Y(i, j) = y;
      }
    const Tensor Xq = glab::testing::random_tensor({10, 8}, rng);
    const Tensor got = predict(fit_pls(X, Y, 8), Xq);
    const auto want = oracle::predict(Xq, oracle::ridge(X, Y, 0.0));
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 3; ++j) worst = std::max(worst, std::abs(got(i, j) - want[i][j]));
  }
  const auto p = pl::norms(7, 80, 15, true);
  SemanticFeatureOptions opt;
  opt.n_components = 100;
  const double map = eval_semantic_features(p.reps, p.set, opt).final_score;
  return verdict(worst < 1e-6 && map >= 0.9,
                 fmt("full-rank PLS vs normal equations on 50 problems: max err %.2g (< 1e-6); planted MAP %.3f (>= 0.9)",
                     worst, map));
}

// Ground-truth relatedness between every pair of content words.
RelatednessSet world_relatedness(const SynthWorld& w) {
  RelatednessSet set;
  const auto words = w.content_words();
  for (std::size_t i = 0; i < words.size(); ++i)
    for (std::size_t j = i + 1; j < words.size(); ++j) set.pairs.push_back({words[i], words[j], w.similarity(i, j), ""});
  return set;
}

double trained_relatedness(const SynthWorld& w, bool clip, std::size_t epochs, std::uint64_t seed) {
  const Corpus c = glab::testing::corpus_from_world(w);
  TransformerConfig tc;
  tc.n_layers = 1;
  tc.hidden_dim = 32;
  tc.n_heads = 2;
  tc.ff_dim = 64;
  tc.max_seq_len = 24;
  Vocab v = Vocab::build(c.records, 1);
  tc.vocab_size = v.size();
  FusionConfig fc;
  Regime regime = Regime::FullCaption;
  if (clip) {
    fc.style = FusionStyle::ClipContrastive;
    fc.feature_dim = c.feature_dim;
    regime = Regime::SingleWord;
  }
  Model m(tc, fc, std::move(v), regime, seed);
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 64;
  cfg.peak_lr = 3e-3;
  cfg.warmup_steps = 100;
  cfg.seed = seed;
  train_model(m, c, cfg);
  return eval_relatedness(extract_rep_table(m, w.content_words()), world_relatedness(w)).final_score;
}

Outcome grounding_trend(const fs::path&) {
  // Small: 6000 scenes (~45K tokens), 10 epochs. Large: 265000 scenes (~2M tokens), 1 epoch.
  constexpr double kMargin = 0.05, kBudget = 1800.0;
  const auto t0 = std::chrono::steady_clock::now();
  double small_gap = 0.0, large_gap = 0.0;
  std::size_t small_tokens = 0, large_tokens = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SynthWorld ws = synth_world(seed, 6000, 60, 32);
    const SynthWorld wl = synth_world(seed, 265000, 60, 32);
    small_tokens = glab::testing::corpus_from_world(ws).token_count;
    large_tokens = glab::testing::corpus_from_world(wl).token_count;
    const double cs = trained_relatedness(ws, true, 10, seed), ls = trained_relatedness(ws, false, 10, seed);
    const double cl = trained_relatedness(wl, true, 1, seed), ll = trained_relatedness(wl, false, 1, seed);
    small_gap += (cs - ls) / 5.0;
    large_gap += (ll - cl) / 5.0;
    per_seed += fmt(" [seed %d small clip %.3f lm %.3f | large clip %.3f lm %.3f]", static_cast<int>(seed), cs, ls,
                    cl, ll);
  }
  const double secs = seconds_since(t0);
  return verdict(small_gap >= kMargin && large_gap >= -kMargin && secs < kBudget,
                 fmt("%zu tokens: clip - lm = %+.3f (>= %.2f); %zu tokens: lm - clip = %+.3f (>= -%.2f); %.0f s "
                     "(< %.0f s);",
                     small_tokens, small_gap, kMargin, large_tokens, large_gap, kMargin, secs, kBudget) +
                     per_seed);
}

Outcome null_calibration(const fs::path&) {
  constexpr int kTrials = 20, kNeed = 19;
  int lex = 0, pos = 0, sem = 0, brain = 0;
  double lex_max = 0.0, pos_dev = 0.0, sem_dev = 0.0, brain_max = 0.0;
  for (int t = 0; t < kTrials; ++t) {
    const auto seed = static_cast<std::uint64_t>(100 + t);
    {
      // Random labels over noise pairs with the majority Random share (~72%).
      Rng rng(seed);
      RepTable reps;
      RelationSet set;
      for (std::size_t i = 0; i < 400; ++i) {
        const std::string a = "a" + std::to_string(i), b = "b" + std::to_string(i);
        pl::put(reps, a, pl::noise_vec(rng, 10), rng);
        pl::put(reps, b, pl::noise_vec(rng, 10), rng);
        const auto label = rng.bernoulli(0.72) ? RelationLabel::Random : static_cast<RelationLabel>(rng.index(4));
        set.pairs.push_back({a, b, label, i % 10 < 7});
      }
      LexicalRelationOptions opt;
      opt.seed = seed;
      const double f1 = eval_lexical_relation(reps, set, opt).final_score;
      lex_max = std::max(lex_max, f1);
      lex += f1 < 0.35;
    }
    {
      const auto p = pl::pos(seed, 300, 2, false);
      PosOptions opt;
      opt.seed = seed;
      const double acc = eval_pos(p.reps, p.set, opt).final_score;
      pos_dev = std::max(pos_dev, std::abs(acc - 0.5));
      pos += std::abs(acc - 0.5) <= 0.1;
    }
    {
      // Planted norms with the word-to-norms alignment shuffled. Each word's
      // three features are uniform, so any scoring blind to the truth has
      // mean MAP k/F with a hypergeometric spread; the band is 3 standard
      // errors over the scored words.
      auto p = pl::norms(seed, 80, 15, true);
      Rng rng(seed ^ 0x5eedULL);
      auto perm = rng.permutation(p.set.words.size());
      std::map<std::string, std::vector<std::pair<std::size_t, double>>> shuffled;
      for (std::size_t i = 0; i < perm.size(); ++i) shuffled[p.set.words[i]] = p.set.norms.at(p.set.words[perm[i]]);
      p.set.norms = shuffled;
      SemanticFeatureOptions opt;
      opt.seed = seed;
      const EvalReport r = eval_semantic_features(p.reps, p.set, opt);
      const double k = 3.0, F = 15.0;
      const double var_overlap = k * (k / F) * ((F - k) / F) * ((F - k) / (F - 1.0));
      const double n = static_cast<double>(r.details["per_word_test_map"].size());
      const double band = 3.0 * std::sqrt(var_overlap) / k / std::sqrt(n);
      const double dev = std::abs(r.final_score - k / F);
      sem_dev = std::max(sem_dev, dev / band);
      sem += dev <= band;
    }
    {
      const auto b = pl::brain(seed, 40, 4, 20, false);
      BrainOptions opt;
      opt.splits = 10;
      opt.seed = seed;
      const double s = eval_brain_response(b.sets, b.layers, opt).final_score;
      brain_max = std::max(brain_max, std::abs(s));
      brain += std::abs(s) <= 0.1;
    }
  }
  return verdict(lex >= kNeed && pos >= kNeed && sem >= kNeed && brain >= kNeed,
                 fmt("in-band trials out of %d (need %d): lexical F1 < 0.35: %d (max %.3f); pos |acc - 0.5| <= 0.1: "
                     "%d (max dev %.3f); semantic |MAP - k/F| <= 3 SE: %d (max %.2f SE); brain |score| <= 0.1: %d "
                     "(max %.3f)",
                     kTrials, kNeed, lex, lex_max, pos, pos_dev, sem, sem_dev, brain, brain_max));
}

Outcome benchgen_audit(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::string> adjs{"red", "small", "old", "shiny", "wet"};
  const std::vector<std::string> places{"table", "floor", "shelf", "bench", "grass"};
  std::vector<TargetSpec> targets;
  std::map<std::string, std::vector<std::string>> sentences;
  std::vector<std::string> all;
  const std::vector<std::pair<std::string, std::string>> toy{
      {"dog", "noun"}, {"cup", "noun"}, {"run", "verb"}, {"blue", "adj"}, {"hat", "noun"}};
  for (const auto& [word, pos] : toy) {
    targets.push_back({word, pos, {word == "dog" ? "cat" : "dog"}});
    for (const auto& a : adjs)
      for (const auto& p : places) {
        sentences[word].push_back("the " + a + " " + word + " is on the " + p + " .");
        all.push_back(sentences[word].back());
      }
  }
  const auto vocab = frequent_words(all, 2000);
  auto build = [&](const fs::path& dir) {
    ScorerClient client(std::make_shared<MockBackend>());
    const BuildResult r = build_benchmark(client, targets, sentences, vocab);
    fs::create_directories(dir);
    write_sentence_pairs(dir / "sentence_pairs.tsv", r.set);
    write_candidates_tsv(dir / "candidates.tsv", r.pairs);
    return r;
  };
  const BuildResult a = build(work / "benchgen_a");
  build(work / "benchgen_b");
  const double secs = seconds_since(t0);
  const bool same = slurp(work / "benchgen_a" / "sentence_pairs.tsv") ==
                        slurp(work / "benchgen_b" / "sentence_pairs.tsv") &&
                    slurp(work / "benchgen_a" / "candidates.tsv") == slurp(work / "benchgen_b" / "candidates.tsv");
  bool audited = true;
  try {
    audit_candidates(a.pairs);
  } catch (const Error&) {
    audited = false;
  }
  // Independent recheck with a fresh scorer and a plain token diff.
  ScorerClient fresh(std::make_shared<MockBackend>());
  std::size_t bad_criterion = 0, bad_edit = 0;
  for (const auto& p : a.pairs) {
    const auto swap_target = [&](const std::string& s) {
      auto toks = tokenize(s);
      for (auto& t : toks)
        if (t == p.target) t = p.distractor;
      return join_tokens(toks);
    };
    const double s_dist = fresh.score(swap_target(p.original)), s_new = fresh.score(swap_target(p.modified));
    if (1.5 * s_new - s_dist != p.criterion) ++bad_criterion;
    const auto o = tokenize(p.original), m = tokenize(p.modified);
    std::size_t diffs = 0;
    bool on_target = false;
    for (std::size_t i = 0; i < std::min(o.size(), m.size()); ++i)
      if (o[i] != m[i]) {
        ++diffs;
        on_target |= o[i] == p.target;
      }
    if (o.size() != m.size() || diffs != 1 || on_target) ++bad_edit;
  }
  return verdict(same && audited && bad_criterion == 0 && bad_edit == 0 && !a.pairs.empty() && secs < 60.0,
                 fmt("%zu pairs from 5 targets; two builds byte-identical: %s; audit: %s; criterion mismatches %zu; "
                     "bad edits %zu; %.2f s (< 60 s)",
                     a.pairs.size(), same ? "yes" : "no", audited ? "ok" : "failed", bad_criterion, bad_edit, secs));
}

Outcome dataset_filters(const fs::path&, const std::string& licensed) {
  if (licensed.empty())
    return {Outcome::Skip,
            "licensed MEN/CogALex/Buchanan/AoA files not supplied (pass --licensed_data DIR with relatedness.tsv, "
            "relations.tsv, norms.tsv, aoa.tsv)"};
  const fs::path d = licensed;
  const auto aoa = load_aoa(d / "aoa.tsv");
  auto young = [&](const std::string& w) {
    const auto it = aoa.find(w);
    return it != aoa.end() && it->second < 10.0;
  };
  std::size_t rel = 0, tr = 0, te = 0, tr_rand = 0, te_rand = 0, norms = 0;
  for (const auto& p : load_relatedness(d / "relatedness.tsv").pairs) rel += young(p.w1) && young(p.w2);
  for (const auto& p : load_relations(d / "relations.tsv").pairs) {
    if (!(young(p.w1) && young(p.w2))) continue;
    const bool rnd = p.label == RelationLabel::Random;
    (p.train ? tr : te) += 1;
    (p.train ? tr_rand : te_rand) += rnd;
  }
  for (const auto& w : load_feature_norms(d / "norms.tsv").words) norms += young(w);
  return verdict(rel == 2057 && tr == 2704 && te == 3900 && tr_rand == 1944 && te_rand == 2770 && norms == 3554,
                 fmt("relatedness %zu (2057); relations train %zu (2704) test %zu (3900); random %zu / %zu (1944 / "
                     "2770); norm words %zu (3554)",
                     rel, tr, te, tr_rand, te_rand, norms));
}

Outcome end_to_end_determinism(const fs::path& work) {
  auto cli = [](std::vector<std::string> args) {
    args.insert(args.begin(), "glab");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (code != 0) throw std::runtime_error(err.str());
  };
  const fs::path world = work / "e2e_world";
  cli({"synth", "--seed", "9", "--out", world.string(), "--n_pairs", "600", "--vocab_size", "24", "--feature_dim",
       "8"});
  std::vector<std::string> reports;
  for (const char* run : {"run_a", "run_b"}) {
    const fs::path d = work / run;
    fs::remove_all(d);
    cli({"train", "--seed", "4", "--out", d.string(), "--corpus", (world / "corpus.jsonl").string(), "--features",
         (world / "features.fvec").string(), "--regime", "full_caption", "--fusion", "git_prefix", "--epochs", "2",
         "--n_layers", "2", "--hidden_dim", "32", "--n_heads", "2", "--ff_dim", "64", "--max_seq_len", "24",
         "--batch_size", "32", "--peak_lr", "1e-3", "--warmup_steps", "20"});
    for (const char* bench : {"relatedness", "semantic_features", "context"})
      cli({"eval", "--seed", "4", "--out", d.string(), "--checkpoint", (d / "checkpoint.lgck").string(),
           "--benchmark", bench, "--relatedness", (world / "relatedness.tsv").string(), "--norms",
           (world / "norms.tsv").string(), "--sentence_pairs", (world / "sentence_pairs.tsv").string()});
  }
  std::size_t compared = 0, differ = 0;
  for (const char* f : {"checkpoint.lgck", "loss.csv", "relatedness.json", "semantic_features.json", "context.json"}) {
    ++compared;
    differ += slurp(work / "run_a" / f) != slurp(work / "run_b" / f);
  }
  return verdict(differ == 0, fmt("%zu artifacts compared across two train+eval runs, %zu differ", compared, differ));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glab acceptance runner"};
  std::string workdir = "acceptance_work", licensed;
  std::vector<std::string> only;
  app.add_option("--workdir", workdir, "scratch directory");
  app.add_option("--licensed_data", licensed, "directory with licensed dataset files");
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  const std::vector<std::pair<std::string, std::function<Outcome(const fs::path&)>>> criteria{
      {"gradient_integrity", gradient_integrity},
      {"loss_anchors", loss_anchors},
      {"metric_oracles", metric_oracles},
      {"pls_correctness", pls_correctness},
      {"grounding_trend", grounding_trend},
      {"null_calibration", null_calibration},
      {"benchgen_audit", benchgen_audit},
      {"dataset_filters", [&](const fs::path& w) { return dataset_filters(w, licensed); }},
      {"end_to_end_determinism", end_to_end_determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome o;
    try {
      o = fn(workdir);
    } catch (const std::exception& e) {
      o = {Outcome::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.kind == Outcome::Pass ? "PASS" : o.kind == Outcome::Skip ? "SKIP" : "FAIL";
    failed += o.kind == Outcome::Fail;
    std::cout << tag << "  " << name << ": " << o.detail << std::endl;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : "acceptance: all run criteria pass")
            << std::endl;
  return failed ? 1 : 0;
}
