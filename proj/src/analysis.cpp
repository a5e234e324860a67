#include "glab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "glab/corpus.hpp"
#include "glab/error.hpp"
#include "glab/probes.hpp"
#include "tsv.hpp"

namespace glab {

using namespace detail;

PairKey pair_key(const std::string& a, const std::string& b) { return a <= b ? PairKey{a, b} : PairKey{b, a}; }

PairScores parse_pair_scores(std::istream& in, const std::string& source) {
  PairScores out;
  for (const auto& r : read_tsv(in)) {
    need_fields(source, r, 3, 3);
    const auto key = pair_key(normalize_caption(r.fields[0]), normalize_caption(r.fields[1]));
    if (!out.emplace(key, parse_number(source, r, r.fields[2])).second) {
      throw IngestError(where(source, r) + ": duplicate pair (" + key.first + ", " + key.second + ")");
    }
  }
  return out;
}

PairScores load_pair_scores(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_pair_scores(in, path.string());
}

void write_pair_scores(const std::filesystem::path& path, const PairScores& scores) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open " + path.string() + " for writing");
  out.precision(17);
  for (const auto& [k, v] : scores) out << k.first << '\t' << k.second << '\t' << v << '\n';
}

PairScores human_pair_scores(const RelatednessSet& set) {
  PairScores out;
  for (const auto& p : set.pairs) out[pair_key(p.w1, p.w2)] = p.score;
  return out;
}

PairScores model_pair_sims(const RepTable& reps, const RelatednessSet& set, std::size_t layer) {
  PairScores out;
  for (const auto& p : set.pairs) {
    if (!reps.contains(p.w1) || !reps.contains(p.w2)) continue;
    const Tensor& a = reps.reps.at(p.w1).at(layer);
    const Tensor& b = reps.reps.at(p.w2).at(layer);
    double d = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      d += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw NumericError("model_pair_sims: zero-norm representation");
    out[pair_key(p.w1, p.w2)] = d / std::sqrt(na * nb);
  }
  return out;
}

namespace {

void require_same_pairs(const PairScores& a, const PairScores& b, const std::string& what) {
  std::vector<std::string> only_a, only_b;
  for (const auto& [k, v] : a)
    if (!b.count(k)) only_a.push_back(k.first + "/" + k.second);
  for (const auto& [k, v] : b)
    if (!a.count(k)) only_b.push_back(k.first + "/" + k.second);
  if (only_a.empty() && only_b.empty()) return;
  auto list = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size() && i < 20; ++i) s += (i ? ", " : "") + v[i];
    if (v.size() > 20) s += ", ... (" + std::to_string(v.size()) + " total)";
    return s.empty() ? std::string("none") : s;
  };
  throw ContractError(what + ": pair sets differ; only in first: " + list(only_a) + "; only in second: " +
                      list(only_b));
}

}  // namespace

std::vector<PairLikeness> human_likeness(const PairScores& model_sims, const PairScores& human_scores) {
  require_same_pairs(model_sims, human_scores, "human_likeness");
  const std::size_t n = model_sims.size();
  if (n < 3) throw ContractError("human_likeness: need at least 3 pairs");
  std::vector<double> m, h;
  for (const auto& [k, v] : model_sims) {
    m.push_back(v);
    h.push_back(human_scores.at(k));
  }
  const auto rm = average_ranks(m), rh = average_ranks(h);
  std::vector<double> neg_diff(n);
  for (std::size_t i = 0; i < n; ++i) neg_diff[i] = -std::abs(rm[i] - rh[i]);
  // Ascending in -|d| puts the least human-like pair at position 0.
  const auto pos = average_ranks(neg_diff);
  std::vector<PairLikeness> out;
  out.reserve(n);
  std::size_t i = 0;
  for (const auto& [k, v] : model_sims) {
    out.push_back({k, rm[i], rh[i], -neg_diff[i], (pos[i] - 1.0) / static_cast<double>(n - 1)});
    ++i;
  }
  return out;
}

void write_likeness_csv(const std::filesystem::path& path, const std::vector<PairLikeness>& rows) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open " + path.string() + " for writing");
  out.precision(17);
  out << "w1,w2,model_rank,human_rank,abs_diff,normalized_rank\n";
  for (const auto& r : rows) {
    out << r.pair.first << ',' << r.pair.second << ',' << r.model_rank << ',' << r.human_rank << ',' << r.abs_diff
        << ',' << r.normalized << '\n';
  }
}

std::optional<double> WordFeatureTable::get(const std::string& word, const std::string& feature) const {
  auto w = values.find(word);
  if (w == values.end()) return std::nullopt;
  auto f = w->second.find(feature);
  if (f == w->second.end()) return std::nullopt;
  return f->second;
}

WordFeatureTable parse_word_features(std::istream& in, const std::string& source) {
  WordFeatureTable t;
  for (const auto& r : read_tsv(in)) {
    need_fields(source, r, 3, 3);
    auto& slot = t.values[normalize_caption(r.fields[0])];
    if (!slot.emplace(r.fields[1], parse_number(source, r, r.fields[2])).second) {
      throw IngestError(where(source, r) + ": duplicate feature '" + r.fields[1] + "' for '" + r.fields[0] + "'");
    }
  }
  return t;
}

WordFeatureTable load_word_features(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_word_features(in, path.string());
}

std::pair<double, double> LinearFit::band(double x) const {
  const double yhat = intercept + slope * x;
  const double half =
      t_critical * residual_se * std::sqrt(1.0 / static_cast<double>(n) + (x - x_mean) * (x - x_mean) / sxx);
  return {yhat - half, yhat + half};
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("fit_line: length mismatch");
  const std::size_t n = x.size();
  if (n < 3) throw ContractError("fit_line: need at least 3 points");
  LinearFit f;
  f.n = n;
  f.x_mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - f.x_mean, dy = y[i] - y_mean;
    f.sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (f.sxx == 0.0) throw NumericError("fit_line: predictor has zero variance");
  f.slope = sxy / f.sxx;
  f.intercept = y_mean - f.slope * f.x_mean;
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    sse += e * e;
  }
  f.r_squared = syy == 0.0 ? 0.0 : std::clamp(1.0 - sse / syy, 0.0, 1.0);
  f.residual_se = std::sqrt(sse / static_cast<double>(n - 2));
  boost::math::students_t dist(static_cast<double>(n - 2));
  f.t_critical = boost::math::quantile(boost::math::complement(dist, 0.025));
  return f;
}

LikenessRegression regress_likeness(const std::vector<PairLikeness>& pairs, const WordFeatureTable& features,
                                    const std::string& feature_name) {
  LikenessRegression r;
  r.feature = feature_name;
  r.predictor = "mean of the two words' feature values";
  std::vector<double> x, y;
  for (const auto& p : pairs) {
    const auto a = features.get(p.pair.first, feature_name);
    const auto b = features.get(p.pair.second, feature_name);
    if (!a || !b) {
      ++r.pairs_dropped;
      continue;
    }
    x.push_back(0.5 * (*a + *b));
    y.push_back(p.normalized);
  }
  if (x.size() < 10) {
    throw ContractError("regress_likeness: feature '" + feature_name + "' available for only " +
                        std::to_string(x.size()) + " pairs (need 10)");
  }
  r.fit = fit_line(x, y);
  return r;
}

std::map<std::string, double> per_word_test_map(const EvalReport& report) {
  if (report.benchmark != "semantic_features" || !report.details.contains("per_word_test_map")) {
    throw ContractError("per_word_test_map: report '" + report.benchmark + "' carries no per-word MAP");
  }
  std::map<std::string, double> out;
  for (const auto& [w, v] : report.details["per_word_test_map"].items()) out[w] = v.get<double>();
  return out;
}

std::map<std::string, double> per_word_difference(const std::map<std::string, double>& a,
                                                  const std::map<std::string, double>& b) {
  std::map<std::string, double> out;
  for (const auto& [w, v] : a) {
    auto it = b.find(w);
    if (it != b.end()) out[w] = v - it->second;
  }
  return out;
}

LikenessRegression regress_word_values(const std::map<std::string, double>& values, const WordFeatureTable& features,
                                       const std::string& feature_name) {
  LikenessRegression r;
  r.feature = feature_name;
  r.predictor = "word feature value";
  std::vector<double> x, y;
  for (const auto& [w, v] : values) {
    const auto f = features.get(w, feature_name);
    if (!f) {
      ++r.pairs_dropped;
      continue;
    }
    x.push_back(*f);
    y.push_back(v);
  }
  if (x.size() < 10) {
    throw ContractError("regress_word_values: feature '" + feature_name + "' available for only " +
                        std::to_string(x.size()) + " words (need 10)");
  }
  r.fit = fit_line(x, y);
  return r;
}

double model_model_corr(const PairScores& a, const PairScores& b) {
  std::vector<double> x, y;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end()) continue;
    x.push_back(v);
    y.push_back(it->second);
  }
  if (x.size() < 3) throw ContractError("model_model_corr: fewer than 3 shared pairs");
  return spearman(x, y);
}

namespace {

PairScores seed_mean(const std::vector<PairScores>& seeds) {
  PairScores out;
  for (const auto& [k, v] : seeds.front()) {
    double s = 0.0;
    bool everywhere = true;
    for (const auto& m : seeds) {
      auto it = m.find(k);
      if (it == m.end()) {
        everywhere = false;
        break;
      }
      s += it->second;
    }
    if (everywhere) out[k] = s / static_cast<double>(seeds.size());
  }
  return out;
}

std::optional<double> self_corr(const std::vector<PairScores>& seeds) {
  if (seeds.size() < 2) return std::nullopt;
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t j = i + 1; j < seeds.size(); ++j, ++n) s += model_model_corr(seeds[i], seeds[j]);
  return s / static_cast<double>(n);
}

}  // namespace

ModelCorrelation model_model_report(const std::vector<PairScores>& seeds_a, const std::vector<PairScores>& seeds_b) {
  if (seeds_a.empty() || seeds_b.empty()) throw ContractError("model_model_report: need at least one seed per model");
  ModelCorrelation r;
  const PairScores a = seed_mean(seeds_a), b = seed_mean(seeds_b);
  r.rho = model_model_corr(a, b);
  for (const auto& [k, v] : a) r.shared_pairs += b.count(k);
  r.self_a = self_corr(seeds_a);
  r.self_b = self_corr(seeds_b);
  return r;
}

std::map<std::string, EvalReport> split_scores(const RepTable& reps, const RelatednessSet& set,
                                               const std::vector<std::string>& categories) {
  if (categories.empty()) throw ContractError("split_scores: no categories given");
  std::map<std::string, EvalReport> out;
  for (const auto& c : categories) {
    RelatednessSet sub;
    for (const auto& p : set.pairs)
      if (p.category == c) sub.pairs.push_back(p);
    if (sub.pairs.empty()) throw ContractError("split_scores: category '" + c + "' has no pairs");
    EvalReport r = eval_relatedness(reps, sub);
    r.benchmark = "relatedness:" + c;
    out.emplace(c, std::move(r));
  }
  return out;
}

nlohmann::ordered_json likeness_to_json(const std::vector<PairLikeness>& rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    arr.push_back({{"w1", r.pair.first},
                   {"w2", r.pair.second},
                   {"model_rank", r.model_rank},
                   {"human_rank", r.human_rank},
                   {"abs_diff", r.abs_diff},
                   {"normalized_rank", r.normalized}});
  }
  return arr;
}

nlohmann::ordered_json regression_to_json(const LikenessRegression& r) {
  nlohmann::ordered_json j;
  j["feature"] = r.feature;
  j["n"] = r.fit.n;
  j["dropped"] = r.pairs_dropped;
  j["predictor"] = r.predictor;
  j["slope"] = r.fit.slope;
  j["intercept"] = r.fit.intercept;
  j["r_squared"] = r.fit.r_squared;
  j["residual_se"] = r.fit.residual_se;
  j["t_critical_95"] = r.fit.t_critical;
  const auto lo = r.fit.band(r.fit.x_mean);
  j["band_at_mean"] = {lo.first, lo.second};
  return j;
}

}  // namespace glab
