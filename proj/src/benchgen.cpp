#include "glab/benchgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "glab/corpus.hpp"
#include "glab/error.hpp"
#include "tsv.hpp"

namespace glab {

using namespace detail;

// ---------------------------------------------------------------------------
// Backends

MockBackend::MockBackend() : fn_([](const std::string& t) { return static_cast<double>(t.size()); }) {}
MockBackend::MockBackend(Fn fn) : fn_(std::move(fn)) {}

std::vector<double> MockBackend::score_batch(const std::vector<std::string>& texts) {
  std::vector<double> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(fn_(t));
  return out;
}

ModelBackend::ModelBackend(std::shared_ptr<const Model> model) : model_(std::move(model)) {
  if (!model_) throw ContractError("ModelBackend: null model");
  if (model_->is_clip()) throw CapabilityError("ModelBackend: CLIP checkpoints cannot score surprisal");
}

double ModelBackend::score_one(const std::string& text) const {
  std::vector<int> seq{Vocab::kBos};
  const auto ids = model_->vocab().encode(text);
  seq.insert(seq.end(), ids.begin(), ids.end());
  if (seq.size() < 2) throw ContractError("ModelBackend: text has no tokens");
  if (seq.size() > model_->config().max_seq_len) {
    throw ContractError("ModelBackend: text longer than max_seq_len: " + text);
  }
  std::optional<Tensor> zero;
  if (model_->fusion().consumes_features()) zero = Tensor(Shape{1, model_->feature_dim()});
  return -sequence_logprob(*model_, seq, zero ? &*zero : nullptr);
}

std::vector<double> ModelBackend::score_batch(const std::vector<std::string>& texts) {
  std::lock_guard lock(mu_);
  std::vector<double> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(score_one(t));
  return out;
}

HttpBackend::HttpBackend(HttpOptions options) : opt_(std::move(options)) {
  if (opt_.max_in_flight == 0 || opt_.batch_size == 0 || opt_.attempts < 1) {
    throw ContractError("HttpBackend: max_in_flight, batch_size and attempts must be positive");
  }
}

std::vector<double> HttpBackend::post_chunk(const std::vector<std::string>& texts, std::size_t offset) {
  nlohmann::json body = nlohmann::json::array();
  for (std::size_t i = 0; i < texts.size(); ++i) body.push_back({{"id", std::to_string(offset + i)}, {"text", texts[i]}});
  const std::string payload = body.dump();

  std::string last_error;
  auto backoff = opt_.backoff;
  for (int attempt = 0; attempt < opt_.attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client cli(opt_.host, opt_.port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opt_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opt_.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    ++requests_;
    auto res = cli.Post("/score_batch", payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ProtocolError("scorer replied HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
      throw ProtocolError("scorer reply is not JSON");
    }
    if (!reply.is_array()) throw ProtocolError("batch reply must be a JSON array");
    std::map<std::string, double> by_id;
    for (const auto& e : reply) {
      if (!e.is_object() || !e.contains("id") || !e.contains("surprisal") || !e["id"].is_string() ||
          !e["surprisal"].is_number()) {
        throw ProtocolError("malformed scorer reply element: " + e.dump());
      }
      by_id[e["id"].get<std::string>()] = e["surprisal"].get<double>();
    }
    std::vector<double> out;
    out.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
      auto it = by_id.find(std::to_string(offset + i));
      if (it == by_id.end()) throw ProtocolError("scorer reply is missing id " + std::to_string(offset + i));
      out.push_back(it->second);
    }
    return out;
  }
  throw ScoringError("scorer at " + opt_.host + ":" + std::to_string(opt_.port) + " failed after " +
                     std::to_string(opt_.attempts) + " attempts: " + last_error);
}

std::vector<double> HttpBackend::score_batch(const std::vector<std::string>& texts) {
  const std::size_t n_chunks = (texts.size() + opt_.batch_size - 1) / opt_.batch_size;
  std::vector<std::vector<double>> results(n_chunks);
  std::vector<std::exception_ptr> errors(n_chunks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c; (c = next.fetch_add(1)) < n_chunks;) {
      const std::size_t lo = c * opt_.batch_size, hi = std::min(texts.size(), lo + opt_.batch_size);
      try {
        results[c] = post_chunk(std::vector<std::string>(texts.begin() + lo, texts.begin() + hi), lo);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(opt_.max_in_flight, n_chunks); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<double> out;
  out.reserve(texts.size());
  for (auto& r : results) out.insert(out.end(), r.begin(), r.end());
  return out;
}

// ---------------------------------------------------------------------------
// Server

struct ScorerServer::Impl {
  std::shared_ptr<ScoreBackend> backend;
  httplib::Server server;
  std::thread thread;
  std::mutex mu;

  nlohmann::json score_items(const nlohmann::json& items) {
    std::vector<std::string> ids, texts;
    for (const auto& e : items) {
      if (!e.is_object() || !e.contains("id") || !e.contains("text") || !e["id"].is_string() ||
          !e["text"].is_string() || e["text"].get<std::string>().empty()) {
        throw std::invalid_argument("each item needs string id and nonempty text");
      }
      ids.push_back(e["id"]);
      texts.push_back(e["text"]);
    }
    std::vector<double> vals;
    {
      std::lock_guard lock(mu);
      vals = backend->score_batch(texts);
    }
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < ids.size(); ++i) out.push_back({{"id", ids[i]}, {"surprisal", vals[i]}});
    return out;
  }

  void install() {
    auto handle = [this](bool batch) {
      return [this, batch](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body;
        try {
          body = nlohmann::json::parse(req.body);
          if (batch && !body.is_array()) throw std::invalid_argument("batch body must be an array");
          const nlohmann::json reply = score_items(batch ? body : nlohmann::json::array({body}));
          res.set_content((batch ? reply : reply[0]).dump(), "application/json");
        } catch (const Error& e) {
          res.status = 500;
          res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
        } catch (const std::exception& e) {
          res.status = 400;
          res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
        }
      };
    };
    server.Post("/score", handle(false));
    server.Post("/score_batch", handle(true));
  }
};

ScorerServer::ScorerServer(std::shared_ptr<ScoreBackend> backend) : impl_(std::make_unique<Impl>()) {
  if (!backend) throw ContractError("ScorerServer: null backend");
  impl_->backend = std::move(backend);
  impl_->install();
}

ScorerServer::~ScorerServer() { stop(); }

int ScorerServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : impl_->server.bind_to_port(host, port) ? port : -1;
  if (bound < 0) throw ScoringError("cannot bind scorer to " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ScorerServer::listen_blocking(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw ScoringError("cannot serve on " + host + ":" + std::to_string(port));
}

void ScorerServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

// ---------------------------------------------------------------------------
// Client

ScorerClient::ScorerClient(std::shared_ptr<ScoreBackend> backend, ScorerOptions options)
    : backend_(std::move(backend)), opt_(options) {
  if (!backend_) throw ContractError("ScorerClient: null backend");
}

double ScorerClient::score(const std::string& text) { return score_many({text})[0]; }

std::vector<double> ScorerClient::score_many(const std::vector<std::string>& texts) {
  std::vector<std::string> missing;
  std::set<std::string> queued;
  for (const auto& t : texts) {
    if (t.empty()) throw ContractError("score: empty text");
    if (!cache_.count(t) && queued.insert(t).second) missing.push_back(t);
  }
  if (!missing.empty()) {
    const auto vals = backend_->score_batch(missing);
    ++backend_calls_;
    texts_fetched_ += missing.size();
    if (vals.size() != missing.size()) throw ProtocolError("scorer returned the wrong number of values");
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (!std::isfinite(vals[i]) || vals[i] < 0.0) {
        throw ProtocolError("scorer returned invalid surprisal " + std::to_string(vals[i]) + " for '" + missing[i] +
                            "'");
      }
    }
    for (std::size_t i = 0; i < vals.size(); ++i) cache_.emplace(missing[i], vals[i]);
  }
  std::vector<double> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    double v = cache_.at(t);
    if (opt_.per_token) v /= static_cast<double>(std::max<std::size_t>(1, tokenize(t).size()));
    out.push_back(v);
  }
  return out;
}

void ScorerClient::save_cache(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open " + path.string() + " for writing");
  char buf[64];
  for (const auto& [t, v] : cache_) {
    std::snprintf(buf, sizeof buf, "%a", v);
    out << buf << '\t' << t << '\n';
  }
}

void ScorerClient::load_cache(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw IngestError(path.string() + ":" + std::to_string(n) + ": missing tab");
    char* end = nullptr;
    const std::string num = line.substr(0, tab);
    const double v = std::strtod(num.c_str(), &end);
    if (end != num.c_str() + num.size() || !std::isfinite(v) || v < 0.0) {
      throw IngestError(path.string() + ":" + std::to_string(n) + ": bad cached value");
    }
    cache_[line.substr(tab + 1)] = v;
  }
}

// ---------------------------------------------------------------------------
// Construction

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

namespace {

std::vector<std::string> canonical_tokens(const std::string& sentence) { return tokenize(normalize_caption(sentence)); }

std::optional<std::size_t> unique_position(const std::vector<std::string>& tokens, const std::string& word) {
  std::optional<std::size_t> pos;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] != word) continue;
    if (pos) return std::nullopt;
    pos = i;
  }
  return pos;
}

bool is_word(const std::string& tok) {
  return std::any_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isalnum(c); });
}

}  // namespace

BaseSelection select_base_sentences(ScorerClient& client, const std::string& target, const std::string& distractor,
                                    const std::vector<std::string>& sentences, std::size_t n) {
  BaseSelection sel;
  std::vector<std::string> origs, dists;
  for (const auto& s : sentences) {
    auto toks = canonical_tokens(s);
    const auto pos = unique_position(toks, target);
    if (!pos) {
      ++sel.ineligible;
      continue;
    }
    origs.push_back(join_tokens(toks));
    toks[*pos] = distractor;
    dists.push_back(join_tokens(toks));
  }
  std::vector<std::string> all(origs);
  all.insert(all.end(), dists.begin(), dists.end());
  const auto scores = all.empty() ? std::vector<double>{} : client.score_many(all);
  std::vector<ScoredSentence> cands;
  for (std::size_t i = 0; i < origs.size(); ++i) cands.push_back({origs[i], scores[i], scores[origs.size() + i]});
  std::stable_sort(cands.begin(), cands.end(),
                   [](const ScoredSentence& a, const ScoredSentence& b) { return a.diff() < b.diff(); });
  if (cands.size() < n) {
    sel.warnings.push_back("only " + std::to_string(cands.size()) + " eligible sentences for (" + target + ", " +
                           distractor + "); wanted " + std::to_string(n));
  }
  if (cands.size() > n) cands.resize(n);
  sel.selected = std::move(cands);
  return sel;
}

CandidatePair make_pair(ScorerClient& client, const std::string& target, const std::string& distractor,
                        const std::string& sentence, const std::vector<std::string>& candidate_vocab) {
  if (candidate_vocab.empty()) throw ContractError("make_pair: empty candidate vocabulary");
  const auto toks = canonical_tokens(sentence);
  const auto tpos = unique_position(toks, target);
  if (!tpos) throw ContractError("make_pair: '" + target + "' must occur exactly once in: " + sentence);
  auto dist_toks = toks;
  dist_toks[*tpos] = distractor;

  struct Cand {
    std::size_t pos;
    const std::string* word;
  };
  std::vector<Cand> cands;
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i == *tpos) continue;
    for (const auto& c : candidate_vocab) {
      if (c == toks[i]) continue;
      auto t = dist_toks;
      t[i] = c;
      cands.push_back({i, &c});
      texts.push_back(join_tokens(t));
    }
  }
  if (cands.empty()) throw ConstructionError("make_pair: no replacement differs from the original at any position");

  CandidatePair p;
  p.target = target;
  p.distractor = distractor;
  p.original = join_tokens(toks);
  const auto base = client.score_many({p.original, join_tokens(dist_toks)});
  p.s_orig = base[0];
  p.s_dist = base[1];
  const auto s_new = client.score_many(texts);
  std::size_t best = 0;
  for (std::size_t k = 1; k < cands.size(); ++k)
    if (benchgen_criterion(s_new[k], p.s_dist) < benchgen_criterion(s_new[best], p.s_dist)) best = k;
  auto modified = toks;
  modified[cands[best].pos] = *cands[best].word;
  p.modified = join_tokens(modified);
  p.position = cands[best].pos;
  p.replacement = *cands[best].word;
  p.s_dist_new = s_new[best];
  p.criterion = benchgen_criterion(p.s_dist_new, p.s_dist);
  return p;
}

std::vector<TargetSpec> parse_targets(std::istream& in, const std::string& source) {
  std::vector<TargetSpec> out;
  for (const auto& r : read_tsv(in)) {
    need_fields(source, r, 3, 3);
    TargetSpec t{normalize_caption(r.fields[0]), r.fields[1], {}};
    std::stringstream ss(r.fields[2]);
    for (std::string d; std::getline(ss, d, ',');) {
      d = normalize_caption(d);
      if (d.empty()) throw IngestError(where(source, r) + ": empty distractor");
      if (d == t.word) throw IngestError(where(source, r) + ": distractor equals target");
      t.distractors.push_back(d);
    }
    if (t.word.empty() || t.distractors.empty()) throw IngestError(where(source, r) + ": need a target and distractors");
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<TargetSpec> load_targets(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_targets(in, path.string());
}

std::map<std::string, std::vector<std::string>> parse_target_sentences(std::istream& in, const std::string& source) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& r : read_tsv(in)) {
    need_fields(source, r, 2, 2);
    out[normalize_caption(r.fields[0])].push_back(r.fields[1]);
  }
  return out;
}

std::map<std::string, std::vector<std::string>> load_target_sentences(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_target_sentences(in, path.string());
}

std::vector<std::string> frequent_words(const std::vector<std::string>& texts, std::size_t n) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts)
    for (const auto& tok : canonical_tokens(t))
      if (is_word(tok)) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> v(counts.begin(), counts.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size() && i < n; ++i) out.push_back(v[i].first);
  return out;
}

BuildResult build_benchmark(ScorerClient& client, const std::vector<TargetSpec>& targets,
                            const std::map<std::string, std::vector<std::string>>& sentences,
                            const std::vector<std::string>& candidate_vocab, const BuildOptions& options) {
  if (targets.empty()) throw ContractError("build_benchmark: no targets");
  if (candidate_vocab.empty()) throw ContractError("build_benchmark: empty candidate vocabulary");
  BuildResult res;
  std::vector<std::pair<std::string, CandidatePair>> made;  // pos, pair
  for (const auto& t : targets) {
    auto it = sentences.find(t.word);
    if (it == sentences.end()) {
      res.warnings.push_back("no sentences for target '" + t.word + "'");
      ++res.failures;
      continue;
    }
    for (const auto& d : t.distractors) {
      std::vector<std::string> vocab;
      for (const auto& w : candidate_vocab)
        if (w != t.word && w != d) vocab.push_back(w);
      try {
        auto sel = select_base_sentences(client, t.word, d, it->second, options.sentences_per_pair);
        res.warnings.insert(res.warnings.end(), sel.warnings.begin(), sel.warnings.end());
        for (const auto& s : sel.selected) {
          try {
            made.emplace_back(t.pos, make_pair(client, t.word, d, s.sentence, vocab));
          } catch (const Error& e) {
            res.warnings.push_back("(" + t.word + ", " + d + "): " + e.what());
            ++res.failures;
          }
        }
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::Protocol || e.kind() == ErrorKind::Scoring) throw;
        res.warnings.push_back("(" + t.word + ", " + d + "): " + e.what());
        ++res.failures;
      }
    }
  }
  std::stable_sort(made.begin(), made.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [pos, p] : made) {
    res.set.pairs.push_back({p.target, p.distractor, p.original, p.modified, pos});
    res.pairs.push_back(std::move(p));
  }
  return res;
}

void audit_candidates(const std::vector<CandidatePair>& pairs) {
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    const std::string at = "candidate " + std::to_string(k) + ": ";
    if (p.criterion != benchgen_criterion(p.s_dist_new, p.s_dist)) throw ContractError(at + "criterion mismatch");
    const auto a = tokenize(p.original), b = tokenize(p.modified);
    if (a.size() != b.size()) throw ContractError(at + "token counts differ");
    std::vector<std::size_t> diffs;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i] != b[i]) diffs.push_back(i);
    if (diffs.size() != 1) throw ContractError(at + "differs at " + std::to_string(diffs.size()) + " positions");
    const auto tpos = unique_position(a, p.target);
    if (!tpos || diffs[0] == *tpos) throw ContractError(at + "edit touches the target word");
  }
}

void write_candidates_tsv(const std::filesystem::path& path, const std::vector<CandidatePair>& pairs) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open " + path.string() + " for writing");
  out.precision(17);
  out << "target\tdistractor\toriginal\tmodified\tposition\treplacement\ts_orig\ts_dist\ts_dist_new\tcriterion\n";
  for (const auto& p : pairs) {
    out << p.target << '\t' << p.distractor << '\t' << p.original << '\t' << p.modified << '\t' << p.position << '\t'
        << p.replacement << '\t' << p.s_orig << '\t' << p.s_dist << '\t' << p.s_dist_new << '\t' << p.criterion
        << '\n';
  }
}

}  // namespace glab
