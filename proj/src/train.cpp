#include "glab/train.hpp"

#include <cmath>
#include <limits>

#include "glab/error.hpp"
#include "glab/rng.hpp"

namespace glab {

std::size_t epochs_for_budget(std::size_t tokens) {
  static const std::pair<double, std::size_t> table[] = {
      {1e5, 200}, {5e5, 40}, {1e6, 60}, {5e6, 20}, {1.5e7, 10}, {5e7, 10},
  };
  const double lt = std::log(static_cast<double>(std::max<std::size_t>(tokens, 1)));
  std::size_t best = table[0].second;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& [budget, epochs] : table) {
    const double d = std::abs(std::log(budget) - lt);
    if (d < best_d) {
      best_d = d;
      best = epochs;
    }
  }
  return best;
}

std::size_t default_batch_size(FusionStyle style) { return style == FusionStyle::ClipContrastive ? 512 : 128; }

Tensor mean_word_features(const Corpus& corpus, const Vocab& vocab) {
  Tensor out(Shape{vocab.size(), corpus.feature_dim});
  std::vector<double> counts(vocab.size(), 0.0);
  std::vector<char> seen(vocab.size());
  for (const auto& r : corpus.records) {
    std::fill(seen.begin(), seen.end(), 0);
    const auto feat = corpus.features.row(r.fvec_index);
    for (int id : vocab.encode(r.caption)) {
      const auto u = static_cast<std::size_t>(id);
      if (seen[u]) continue;
      seen[u] = 1;
      counts[u] += 1.0;
      auto row = out.row(u);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += feat[c];
    }
  }
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (counts[i] == 0.0) continue;
    for (double& v : out.row(i)) v /= counts[i];
  }
  return out;
}

RecordSplit split_records(const std::vector<CaptionRecord>& records, double eval_fraction, std::uint64_t seed) {
  if (eval_fraction < 0.0 || eval_fraction >= 1.0) throw ContractError("eval_fraction must be in [0, 1)");
  Rng rng = Rng::stream(seed, "splits.train_eval");
  const auto perm = rng.permutation(records.size());
  std::size_t n_eval = static_cast<std::size_t>(std::floor(eval_fraction * static_cast<double>(records.size())));
  if (eval_fraction > 0.0 && n_eval == 0 && records.size() >= 2) n_eval = 1;
  RecordSplit split;
  for (std::size_t i = 0; i < perm.size(); ++i) (i < n_eval ? split.eval : split.train).push_back(records[perm[i]]);
  return split;
}

double evaluate_loss(Model& model, const std::vector<TrainingExample>& examples, const Tensor& features,
                     std::size_t batch_size) {
  if (examples.empty()) throw ContractError("evaluate_loss: no examples");
  double total = 0.0, weight = 0.0;
  for (std::size_t s = 0; s < examples.size(); s += batch_size) {
    const std::size_t e = std::min(examples.size(), s + batch_size);
    std::vector<TrainingExample> batch(examples.begin() + static_cast<std::ptrdiff_t>(s),
                                       examples.begin() + static_cast<std::ptrdiff_t>(e));
    Graph g(false);
    total += training_loss(g, model, batch, features).value().item() * static_cast<double>(e - s);
    weight += static_cast<double>(e - s);
  }
  return total / weight;
}

std::vector<EpochLog> train_model(Model& model, const Corpus& corpus, const TrainConfig& config,
                                  const std::function<void(const Model&, const EpochLog&)>& on_epoch) {
  if (config.batch_size < 1) throw ContractError("train: batch_size must be >= 1");
  if (corpus.records.empty()) throw ContractError("train: corpus is empty");
  const RecordSplit split = split_records(corpus.records, config.eval_fraction, config.seed);
  const auto train = make_examples(split.train, model.regime(), model.vocab(), config.context_width);
  const auto held = make_examples(split.eval, model.regime(), model.vocab(), config.context_width);
  if (train.empty()) throw ContractError("train: no training examples for regime " + regime_name(model.regime()));
  if (model.is_clip()) model.set_word_features(mean_word_features(corpus, model.vocab()));

  AdamW opt(config.adamw);
  const WarmupSchedule sched{config.warmup_steps, config.peak_lr};
  Rng rng = Rng::stream(config.seed, "train");
  std::vector<std::size_t> order(train.size());
  std::vector<EpochLog> log;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t s = 0; s < order.size(); s += config.batch_size) {
      const std::size_t e = std::min(order.size(), s + config.batch_size);
      std::vector<TrainingExample> batch;
      batch.reserve(e - s);
      for (std::size_t i = s; i < e; ++i) batch.push_back(train[order[i]]);
      Graph g;
      Var loss = training_loss(g, model, batch, corpus.features);
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) {
        throw TrainingError("non-finite loss at step " + std::to_string(model.step()) + " (epoch " +
                            std::to_string(epoch) + ")");
      }
      model.params().zero_grad();
      g.backward(loss);
      opt.step(model.params(), sched.lr_at(model.step()));
      model.set_step(model.step() + 1);
      sum += lv * static_cast<double>(e - s);
      n += e - s;
    }
    EpochLog entry{epoch, model.step(), sum / static_cast<double>(n), std::nullopt};
    if (!held.empty()) entry.eval_loss = evaluate_loss(model, held, corpus.features, config.batch_size);
    log.push_back(entry);
    if (on_epoch) on_epoch(model, entry);
  }
  return log;
}

}  // namespace glab
