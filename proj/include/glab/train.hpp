#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "glab/corpus.hpp"
#include "glab/model.hpp"
#include "glab/optim.hpp"

namespace glab {

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 128;
  double peak_lr = 1e-4;
  std::int64_t warmup_steps = 5000;
  AdamWConfig adamw;
  double eval_fraction = 0.05;  // share of records held out for eval loss
  std::size_t context_width = 3;
  std::uint64_t seed = 0;
};

// Number of epochs for a token budget: nearest entry (log scale) of
// 100K:200, 500K:40, 1M:60, 5M:20, 15M:10, 50M:10.
std::size_t epochs_for_budget(std::size_t tokens);

// Batch size default: 512 for CLIP, 128 otherwise.
std::size_t default_batch_size(FusionStyle style);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  std::int64_t step = 0;
  double train_loss = 0.0;
  std::optional<double> eval_loss;
};

// Mean image feature of the records each vocabulary token occurs in.
Tensor mean_word_features(const Corpus& corpus, const Vocab& vocab);

// Record split used for the eval loss; derived from the config seed only.
struct RecordSplit {
  std::vector<CaptionRecord> train;
  std::vector<CaptionRecord> eval;
};
RecordSplit split_records(const std::vector<CaptionRecord>& records, double eval_fraction, std::uint64_t seed);

// Trains `model` in its own regime. `on_epoch` runs after every epoch (the
// CLI saves a checkpoint there). A non-finite loss or gradient throws
// TrainingError before any parameter is touched by that step.
std::vector<EpochLog> train_model(Model& model, const Corpus& corpus, const TrainConfig& config,
                                  const std::function<void(const Model&, const EpochLog&)>& on_epoch = {});

double evaluate_loss(Model& model, const std::vector<TrainingExample>& examples, const Tensor& features,
                     std::size_t batch_size);

}  // namespace glab
