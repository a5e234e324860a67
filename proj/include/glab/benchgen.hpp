#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "glab/benchmarks.hpp"
#include "glab/model.hpp"

namespace glab {

// ---------------------------------------------------------------------------
// Scoring backends. A backend returns raw total surprisal per text.

class ScoreBackend {
 public:
  virtual ~ScoreBackend() = default;
  virtual std::vector<double> score_batch(const std::vector<std::string>& texts) = 0;
};

// Deterministic function of the text; defaults to its length.
class MockBackend : public ScoreBackend {
 public:
  using Fn = std::function<double(const std::string&)>;
  MockBackend();
  explicit MockBackend(Fn fn);
  std::vector<double> score_batch(const std::vector<std::string>& texts) override;

 private:
  Fn fn_;
};

// -sequence_logprob of [BOS] + tokens under a generative checkpoint.
class ModelBackend : public ScoreBackend {
 public:
  explicit ModelBackend(std::shared_ptr<const Model> model);
  std::vector<double> score_batch(const std::vector<std::string>& texts) override;
  double score_one(const std::string& text) const;

 private:
  std::shared_ptr<const Model> model_;
  std::mutex mu_;  // forward passes share the model's graph scratch
};

struct HttpOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::chrono::milliseconds timeout{10000};
  std::size_t max_in_flight = 4;
  int attempts = 3;
  std::chrono::milliseconds backoff{100};  // doubled after each failure
  std::size_t batch_size = 32;             // texts per batch request
};

// POSTs {"id","text"} arrays to /score_batch.
class HttpBackend : public ScoreBackend {
 public:
  explicit HttpBackend(HttpOptions options);
  std::vector<double> score_batch(const std::vector<std::string>& texts) override;
  std::size_t requests_sent() const { return requests_.load(); }

 private:
  std::vector<double> post_chunk(const std::vector<std::string>& texts, std::size_t offset);
  HttpOptions opt_;
  std::atomic<std::size_t> requests_{0};
};

// Serves the scoring protocol over HTTP: POST /score and POST /score_batch.
class ScorerServer {
 public:
  explicit ScorerServer(std::shared_ptr<ScoreBackend> backend);
  ~ScorerServer();
  ScorerServer(const ScorerServer&) = delete;
  ScorerServer& operator=(const ScorerServer&) = delete;

  // Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Blocks serving on the calling thread.
  void listen_blocking(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Cached client

struct ScorerOptions {
  bool per_token = false;  // divide the total by the token count (punctuation included)
};

class ScorerClient {
 public:
  explicit ScorerClient(std::shared_ptr<ScoreBackend> backend, ScorerOptions options = {});

  double score(const std::string& text);
  // Missing texts are fetched in one backend call, duplicates collapsed.
  std::vector<double> score_many(const std::vector<std::string>& texts);

  std::size_t backend_calls() const { return backend_calls_; }
  std::size_t texts_fetched() const { return texts_fetched_; }
  std::size_t cache_size() const { return cache_.size(); }

  // Cache file: hexfloat value, tab, text. Values round-trip bitwise.
  void save_cache(const std::filesystem::path& path) const;
  void load_cache(const std::filesystem::path& path);

 private:
  std::shared_ptr<ScoreBackend> backend_;
  ScorerOptions opt_;
  std::map<std::string, double> cache_;  // raw totals
  std::size_t backend_calls_ = 0, texts_fetched_ = 0;
};

// ---------------------------------------------------------------------------
// Construction

// Tokens joined by single spaces.
std::string join_tokens(const std::vector<std::string>& tokens);

struct ScoredSentence {
  std::string sentence;  // canonical form
  double s_orig = 0.0, s_dist = 0.0;
  double diff() const { return s_orig - s_dist; }
};

struct BaseSelection {
  std::vector<ScoredSentence> selected;
  std::size_t ineligible = 0;  // target absent or repeated
  std::vector<std::string> warnings;
};

BaseSelection select_base_sentences(ScorerClient& client, const std::string& target, const std::string& distractor,
                                    const std::vector<std::string>& sentences, std::size_t n = 20);

struct CandidatePair {
  std::string target, distractor;
  std::string original, modified;
  std::size_t position = 0;  // replaced token index
  std::string replacement;
  double s_orig = 0.0, s_dist = 0.0, s_dist_new = 0.0;
  double criterion = 0.0;  // 1.5 * s_dist_new - s_dist
};

inline double benchgen_criterion(double s_dist_new, double s_dist) { return 1.5 * s_dist_new - s_dist; }

// Minimises the criterion over every non-target position and candidate word;
// ties go to the earlier position, then the earlier candidate.
CandidatePair make_pair(ScorerClient& client, const std::string& target, const std::string& distractor,
                        const std::string& sentence, const std::vector<std::string>& candidate_vocab);

struct TargetSpec {
  std::string word, pos;
  std::vector<std::string> distractors;
};

// TSV: word, pos, comma-separated distractors.
std::vector<TargetSpec> load_targets(const std::filesystem::path& path);
std::vector<TargetSpec> parse_targets(std::istream& in, const std::string& source);
// TSV: target, sentence. Returns target -> sentences in file order.
std::map<std::string, std::vector<std::string>> load_target_sentences(const std::filesystem::path& path);
std::map<std::string, std::vector<std::string>> parse_target_sentences(std::istream& in, const std::string& source);

// Most frequent word tokens (ties alphabetical), excluding punctuation.
std::vector<std::string> frequent_words(const std::vector<std::string>& texts, std::size_t n = 2000);

struct BuildOptions {
  std::size_t sentences_per_pair = 20;
};

struct BuildResult {
  SentencePairSet set;               // grouped by POS
  std::vector<CandidatePair> pairs;  // aligned with set.pairs
  std::vector<std::string> warnings;
  std::size_t failures = 0;
};

// Candidates exclude the current target and distractor.
BuildResult build_benchmark(ScorerClient& client, const std::vector<TargetSpec>& targets,
                            const std::map<std::string, std::vector<std::string>>& sentences,
                            const std::vector<std::string>& candidate_vocab, const BuildOptions& options = {});

// Recomputes each criterion and checks the one-position, non-target edit.
void audit_candidates(const std::vector<CandidatePair>& pairs);

void write_candidates_tsv(const std::filesystem::path& path, const std::vector<CandidatePair>& pairs);

}  // namespace glab
