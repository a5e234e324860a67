#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "glab/benchmarks.hpp"

namespace glab {

// Unordered word pair, stored with w1 <= w2.
using PairKey = std::pair<std::string, std::string>;
PairKey pair_key(const std::string& a, const std::string& b);
using PairScores = std::map<PairKey, double>;

// TSV: w1, w2, value. Duplicate pairs are an ingest error.
PairScores parse_pair_scores(std::istream& in, const std::string& source);
PairScores load_pair_scores(const std::filesystem::path& path);
void write_pair_scores(const std::filesystem::path& path, const PairScores& scores);

PairScores human_pair_scores(const RelatednessSet& set);
// Cosine similarity at `layer` for every pair whose words both have reps.
PairScores model_pair_sims(const RepTable& reps, const RelatednessSet& set, std::size_t layer);

struct PairLikeness {
  PairKey pair;
  double model_rank = 0.0;
  double human_rank = 0.0;
  double abs_diff = 0.0;
  double normalized = 0.0;  // 0 = least human-like, 1 = most
};

// Pairs come back in key order. Ties in |model rank - human rank| share an
// averaged normalized rank.
std::vector<PairLikeness> human_likeness(const PairScores& model_sims, const PairScores& human_scores);
void write_likeness_csv(const std::filesystem::path& path, const std::vector<PairLikeness>& rows);

struct WordFeatureTable {
  std::map<std::string, std::map<std::string, double>> values;  // word -> feature -> value
  std::optional<double> get(const std::string& word, const std::string& feature) const;
};
WordFeatureTable parse_word_features(std::istream& in, const std::string& source);
WordFeatureTable load_word_features(const std::filesystem::path& path);

struct LinearFit {
  std::size_t n = 0;
  double slope = 0.0, intercept = 0.0, r_squared = 0.0;
  double residual_se = 0.0;  // sqrt(SSE / (n - 2))
  double x_mean = 0.0, sxx = 0.0;
  double t_critical = 0.0;  // two-sided 95%, n - 2 dof

  // 95% confidence band for the mean response at x.
  std::pair<double, double> band(double x) const;
};

// Ordinary least squares of y on x; NumericError on zero x variance.
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct LikenessRegression {
  std::string feature;
  std::string predictor;
  LinearFit fit;
  std::size_t pairs_dropped = 0;  // rows (pairs or words) missing the feature
};

// Predictor per pair = mean of the two words' feature values.
LikenessRegression regress_likeness(const std::vector<PairLikeness>& pairs, const WordFeatureTable& features,
                                    const std::string& feature_name);

// Per-word test MAP of the selected layer from a semantic_features report.
std::map<std::string, double> per_word_test_map(const EvalReport& report);
// a - b over the words both reports scored.
std::map<std::string, double> per_word_difference(const std::map<std::string, double>& a,
                                                  const std::map<std::string, double>& b);
// OLS of a per-word value on one word feature (>= 10 words with the feature).
LikenessRegression regress_word_values(const std::map<std::string, double>& values, const WordFeatureTable& features,
                                       const std::string& feature_name);

// Spearman over the shared pairs (>= 3).
double model_model_corr(const PairScores& a, const PairScores& b);

struct ModelCorrelation {
  double rho = 0.0;  // between seed-averaged sims
  std::size_t shared_pairs = 0;
  std::optional<double> self_a, self_b;  // mean pairwise cross-seed Spearman
};
ModelCorrelation model_model_report(const std::vector<PairScores>& seeds_a, const std::vector<PairScores>& seeds_b);

// Relatedness report per category tag (each restricted to that tag's pairs).
std::map<std::string, EvalReport> split_scores(const RepTable& reps, const RelatednessSet& set,
                                               const std::vector<std::string>& categories);

nlohmann::ordered_json likeness_to_json(const std::vector<PairLikeness>& rows);
nlohmann::ordered_json regression_to_json(const LikenessRegression& r);

}  // namespace glab
