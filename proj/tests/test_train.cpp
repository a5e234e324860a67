#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "glab/error.hpp"
#include "glab/train.hpp"
#include "support.hpp"

using namespace glab;
using namespace glab::testing;

TEST(Train, EpochTableNearestInLogScale) {
  EXPECT_EQ(epochs_for_budget(100'000), 200u);
  EXPECT_EQ(epochs_for_budget(500'000), 40u);
  EXPECT_EQ(epochs_for_budget(1'000'000), 60u);
  EXPECT_EQ(epochs_for_budget(5'000'000), 20u);
  EXPECT_EQ(epochs_for_budget(15'000'000), 10u);
  EXPECT_EQ(epochs_for_budget(50'000'000), 10u);
  EXPECT_EQ(epochs_for_budget(10'000), 200u);
  EXPECT_EQ(epochs_for_budget(200'000), 200u);  // below sqrt(1e5 * 5e5)
  EXPECT_EQ(epochs_for_budget(250'000), 40u);
  EXPECT_EQ(epochs_for_budget(2'000'000), 60u);
  EXPECT_EQ(epochs_for_budget(1'000'000'000), 10u);
}

TEST(Train, DefaultBatchSizes) {
  EXPECT_EQ(default_batch_size(FusionStyle::ClipContrastive), 512u);
  EXPECT_EQ(default_batch_size(FusionStyle::None), 128u);
  EXPECT_EQ(default_batch_size(FusionStyle::GitPrefix), 128u);
}

TEST(Train, SplitRecordsPartitionsDeterministically) {
  const Corpus c = tiny_corpus(1, 100);
  const auto a = split_records(c.records, 0.1, 3), b = split_records(c.records, 0.1, 3);
  EXPECT_EQ(a.eval.size(), 10u);
  EXPECT_EQ(a.train.size() + a.eval.size(), 100u);
  std::set<std::string> ids;
  for (const auto& r : a.train) ids.insert(r.id);
  for (const auto& r : a.eval) EXPECT_FALSE(ids.count(r.id));
  for (std::size_t i = 0; i < a.eval.size(); ++i) EXPECT_EQ(a.eval[i].id, b.eval[i].id);
  EXPECT_EQ(split_records(c.records, 0.0, 3).eval.size(), 0u);
  EXPECT_EQ(split_records({c.records[0], c.records[1]}, 0.01, 3).eval.size(), 1u);
}

TEST(Train, MeanWordFeatures) {
  Corpus c;
  c.records = {{"a", "x y", 0}, {"b", "x", 1}};
  c.features = Tensor::matrix(2, 2, {1, 0, 3, 4});
  c.feature_dim = 2;
  const Vocab v = Vocab::build(c.records, 1);
  const Tensor wf = mean_word_features(c, v);
  EXPECT_EQ(wf.rows(), v.size());
  EXPECT_DOUBLE_EQ(wf(static_cast<std::size_t>(v.id("x")), 0), 2.0);
  EXPECT_DOUBLE_EQ(wf(static_cast<std::size_t>(v.id("x")), 1), 2.0);
  EXPECT_DOUBLE_EQ(wf(static_cast<std::size_t>(v.id("y")), 0), 1.0);
  EXPECT_DOUBLE_EQ(wf(Vocab::kPad, 0), 0.0);
}

TEST(Train, SeededRunsAreBitwiseIdentical) {
  const Corpus c = tiny_corpus(2, 80);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.peak_lr = 3e-3;
  cfg.warmup_steps = 5;
  cfg.seed = 4;
  for (const auto& v : all_variants()) {
    Model a = tiny_model(c, v, 4), b = tiny_model(c, v, 4);
    const auto la = train_model(a, c, cfg), lb = train_model(b, c, cfg);
    ASSERT_EQ(la.size(), 2u);
    for (std::size_t e = 0; e < la.size(); ++e) {
      EXPECT_EQ(la[e].train_loss, lb[e].train_loss) << v.name;
      EXPECT_EQ(la[e].eval_loss, lb[e].eval_loss) << v.name;
    }
    for (const auto& p : a.params()) EXPECT_EQ(p->value, b.params().get(p->name).value) << v.name << p->name;
    EXPECT_EQ(a.step(), la.back().step);
  }
}

TEST(Train, EvalLossDecreasesOnSyntheticWorld) {
  const Corpus c = tiny_corpus(3, 400);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 32;
  cfg.peak_lr = 3e-3;
  cfg.warmup_steps = 10;
  cfg.eval_fraction = 0.1;
  Model m = tiny_model(c, all_variants()[0], 1);
  std::size_t calls = 0;
  const auto log = train_model(m, c, cfg, [&](const Model&, const EpochLog&) { ++calls; });
  EXPECT_EQ(calls, 4u);
  ASSERT_TRUE(log.front().eval_loss && log.back().eval_loss);
  EXPECT_LT(*log.back().eval_loss, *log.front().eval_loss);
}

TEST(Train, NonFiniteLossAbortsBeforeTheStep) {
  const Corpus c = tiny_corpus(3, 40);
  Model m = tiny_model(c, all_variants()[0], 1);
  m.params().get("ln_f.g").value[0] = std::nan("");
  const Tensor before = m.params().get("tok_emb").value;
  TrainConfig cfg;
  cfg.batch_size = 8;
  EXPECT_THROW(train_model(m, c, cfg), TrainingError);
  EXPECT_EQ(m.step(), 0);
  EXPECT_EQ(m.params().get("tok_emb").value, before);
}

TEST(Train, ZeroEpochsLeavesInitialWeights) {
  const Corpus c = tiny_corpus(3, 40);
  Model m = tiny_model(c, all_variants()[4], 1);  // CLIP: also fills word features
  const Tensor before = m.params().get("tok_emb").value;
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_TRUE(train_model(m, c, cfg).empty());
  EXPECT_EQ(m.params().get("tok_emb").value, before);
  EXPECT_TRUE(m.word_features().has_value());
}
