#include "glab/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include "glab/analysis.hpp"
#include "glab/benchgen.hpp"
#include "glab/error.hpp"
#include "glab/synth.hpp"

namespace glab {

std::string tool_version() { return "glab 0.1.0"; }

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericError("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

// ---------------------------------------------------------------------------
// Config

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "run", "", "master seed (required)"},
      {"out", "run", "out", "output directory"},
      {"threads", "run", "1", "worker threads (scorer requests in flight)"},

      {"corpus", "data", "", "caption corpus (JSONL)"},
      {"features", "data", "", "feature vectors (FVEC)"},
      {"token_budget", "data", "0", "token budget, 0 = whole corpus"},
      {"min_count", "data", "1", "vocabulary frequency cutoff"},

      {"regime", "model", "full_caption", "full_caption|single_word|context_window|word_only"},
      {"fusion", "model", "none", "none|git_prefix|clip_contrastive|flamingo_xattn"},
      {"n_layers", "model", "2", "transformer layers"},
      {"hidden_dim", "model", "128", "hidden size"},
      {"n_heads", "model", "4", "attention heads"},
      {"ff_dim", "model", "512", "feed-forward size"},
      {"max_seq_len", "model", "32", "maximum sequence length"},
      {"tie_embeddings", "model", "true", "share input and output embeddings"},
      {"n_latents", "model", "8", "Flamingo resampler latents"},
      {"resampler_layers", "model", "2", "Flamingo resampler layers"},
      {"xattn_every", "model", "1", "Flamingo cross-attention interval"},
      {"visual_tokens", "model", "1", "Flamingo visual tokens per feature vector"},

      {"epochs", "train", "auto", "epochs, or auto (token-budget table)"},
      {"batch_size", "train", "auto", "batch size, or auto (512 CLIP, 128 otherwise)"},
      {"peak_lr", "train", "1e-4", "peak learning rate"},
      {"warmup_steps", "train", "5000", "linear warmup steps"},
      {"weight_decay", "train", "0.01", "AdamW weight decay"},
      {"eval_fraction", "train", "0.05", "records held out for eval loss"},
      {"context_width", "train", "3", "context_window regime width"},

      {"checkpoint", "eval", "", "model checkpoint"},
      {"benchmark", "eval", "", "relatedness|lexical_relation|semantic_features|pos|context|brain"},
      {"benchmarks", "eval", "relatedness", "benchmarks run by sweep"},
      {"relatedness", "eval", "", "relatedness pairs TSV"},
      {"relations", "eval", "", "lexical relation TSV"},
      {"norms", "eval", "", "feature norms TSV"},
      {"pos", "eval", "", "part-of-speech TSV"},
      {"sentence_pairs", "eval", "", "context sentence pairs TSV"},
      {"brain_sentences", "eval", "", "brain stimulus sentence TSVs (comma list)"},
      {"brain_responses", "eval", "", "brain response FVECs (comma list)"},
      {"brain_ceilings", "eval", "", "brain noise ceiling TSVs (comma list)"},
      {"aoa", "eval", "", "age-of-acquisition TSV"},
      {"aoa_threshold", "eval", "", "keep words with AoA below this"},
      {"category", "eval", "", "restrict relatedness to one category"},
      {"clip_proxy", "eval", "false", "score CLIP checkpoints on context pairs with the segment proxy"},
      {"segment_width", "eval", "3", "context segment width"},
      {"ridge_lambda", "eval", "1.0", "brain ridge penalty"},
      {"brain_splits", "eval", "10", "brain passage splits"},
      {"pos_splits", "eval", "4", "POS splits"},
      {"svc_grid", "eval", "0.01,1,100", "POS C grid"},
      {"sem_splits", "eval", "2", "semantic feature splits"},
      {"pls_components", "eval", "100", "PLS components"},

      {"scales", "sweep", "", "token budgets (comma list)"},
      {"seeds", "sweep", "", "seeds (comma list)"},
      {"variants", "sweep", "full_caption:none", "regime:fusion pairs (comma list)"},

      {"n_pairs", "synth", "6000", "synthetic caption-image pairs"},
      {"vocab_size", "synth", "60", "synthetic content words"},
      {"feature_dim", "synth", "32", "synthetic feature size"},
      {"noise", "synth", "0.5", "synthetic feature noise"},
      {"dataset_seed", "synth", "", "seed for synthetic benchmark files (default: seed)"},

      {"targets", "benchgen", "", "targets TSV (word, pos, distractors)"},
      {"sentences", "benchgen", "", "sentences TSV (target, sentence)"},
      {"scorer", "benchgen", "mock", "mock|model|http"},
      {"scorer_host", "benchgen", "127.0.0.1", "scoring service host"},
      {"scorer_port", "benchgen", "8080", "scoring service port"},
      {"timeout_ms", "benchgen", "10000", "scoring request timeout"},
      {"candidates", "benchgen", "", "candidate replacement words, one per line"},
      {"candidate_count", "benchgen", "2000", "most frequent sentence words used as candidates"},
      {"sentences_per_pair", "benchgen", "20", "base sentences per target-distractor pair"},
      {"cache", "benchgen", "", "surprisal cache to warm from"},
      {"per_token", "benchgen", "false", "normalise surprisal by token count"},

      {"model_sims", "analyze", "", "model pair similarities TSV"},
      {"human", "analyze", "", "human pair scores TSV"},
      {"word_features", "analyze", "", "word feature TSV (word, feature, value)"},
      {"regress_features", "analyze", "concreteness,age_of_acquisition,zipf_frequency,prevalence",
       "features to regress likeness on"},
      {"sims_a", "analyze", "", "model A similarity TSVs, one per seed (comma list)"},
      {"sims_b", "analyze", "", "model B similarity TSVs, one per seed (comma list)"},
      {"layer", "analyze", "best", "layer for pair similarities, or best"},
      {"report_a", "analyze", "", "semantic_features report of model A"},
      {"report_b", "analyze", "", "semantic_features report of model B"},
      {"categories", "analyze", "", "relatedness categories (comma list)"},

      {"host", "serve", "127.0.0.1", "scorer bind address"},
      {"port", "serve", "8080", "scorer port"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ContractError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::merge_ini(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ContractError("config file not found: " + path.string());
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ContractError(std::string("config: ") + e.what());
  }
  for (const auto& [name, node] : pt) {
    if (node.empty()) {
      set(name, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) {
      if (!leaf.empty()) throw ContractError("config: nested section in " + path.string());
      set(key, leaf.data());
    }
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ContractError("unknown config key '" + key + "'");
  return it->second;
}

std::string RunConfig::path(const std::string& key) const {
  const std::string& v = get(key);
  if (v.empty()) throw ContractError("missing required setting '" + key + "'");
  if (!std::filesystem::exists(v)) throw ContractError(key + ": path does not exist: " + v);
  return v;
}

double RunConfig::number(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  throw ContractError(key + ": expected a number, got '" + v + "'");
}

std::int64_t RunConfig::integer(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ContractError(key + ": expected an integer, got '" + v + "'");
}

std::size_t RunConfig::size(const std::string& key) const {
  const auto v = integer(key);
  if (v < 0) throw ContractError(key + ": must be >= 0");
  return static_cast<std::size_t>(v);
}

std::optional<std::size_t> RunConfig::size_or_auto(const std::string& key) const {
  if (get(key) == "auto") return std::nullopt;
  return size(key);
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off" || v.empty()) return false;
  throw ContractError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::uint64_t RunConfig::seed() const {
  if (!has("seed")) throw ContractError("seed is mandatory (set --seed or [run] seed)");
  const auto s = integer("seed");
  if (s < 0) throw ContractError("seed must be >= 0");
  return static_cast<std::uint64_t>(s);
}

nlohmann::ordered_json RunConfig::canonical() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : values_)
    if (k != "out" && k != "threads") j[k] = v;
  return j;
}

std::string RunConfig::fingerprint() const { return sha256_hex(canonical().dump()); }

// ---------------------------------------------------------------------------
// Manifest

nlohmann::ordered_json manifest_to_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["tool"] = tool_version();
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["status"] = m.status;
  j["fingerprint"] = m.fingerprint;
  j["config"] = m.config;
  j["artifacts"] = m.artifacts;
  j["notes"] = m.notes;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["wall_seconds"] = m.wall_seconds;
  return j;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open " + path.string() + " for writing");
  out << manifest_to_json(m).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Pipeline

Corpus load_run_corpus(const RunConfig& cfg) {
  const auto budget = cfg.size("token_budget");
  return load_corpus(cfg.path("corpus"), cfg.path("features"),
                     budget == 0 ? std::nullopt : std::optional<std::size_t>(budget));
}

Model build_model(const RunConfig& cfg, const Corpus& corpus) {
  const auto min_count = cfg.integer("min_count");
  if (min_count < 1) throw ContractError("min_count must be >= 1");
  Vocab vocab = Vocab::build(corpus.records, static_cast<int>(min_count));
  TransformerConfig tc;
  tc.n_layers = cfg.size("n_layers");
  tc.hidden_dim = cfg.size("hidden_dim");
  tc.n_heads = cfg.size("n_heads");
  tc.ff_dim = cfg.size("ff_dim");
  tc.max_seq_len = cfg.size("max_seq_len");
  tc.tie_embeddings = cfg.flag("tie_embeddings");
  tc.vocab_size = vocab.size();
  FusionConfig fc;
  fc.style = parse_fusion_style(cfg.get("fusion"));
  if (fc.style != FusionStyle::None) fc.feature_dim = corpus.feature_dim;
  fc.n_latents = cfg.size("n_latents");
  fc.resampler_layers = cfg.size("resampler_layers");
  fc.xattn_every = cfg.size("xattn_every");
  fc.visual_tokens = cfg.size("visual_tokens");
  return Model(tc, fc, std::move(vocab), parse_regime(cfg.get("regime")), cfg.seed());
}

TrainConfig train_config_from(const RunConfig& cfg, FusionStyle style, std::size_t corpus_tokens,
                              nlohmann::ordered_json* notes) {
  TrainConfig tc;
  const auto epochs = cfg.size_or_auto("epochs");
  tc.epochs = epochs ? *epochs : epochs_for_budget(corpus_tokens);
  const auto batch = cfg.size_or_auto("batch_size");
  tc.batch_size = batch ? *batch : default_batch_size(style);
  tc.peak_lr = cfg.number("peak_lr");
  tc.warmup_steps = cfg.integer("warmup_steps");
  tc.adamw.weight_decay = cfg.number("weight_decay");
  tc.eval_fraction = cfg.number("eval_fraction");
  tc.context_width = cfg.size("context_width");
  tc.seed = cfg.seed();
  if (notes) {
    (*notes)["corpus_tokens"] = corpus_tokens;
    (*notes)["epochs"] = tc.epochs;
    (*notes)["epochs_source"] =
        epochs ? "config" : "auto table 100K:200 500K:40 1M:60 5M:20 15M:10 50M:10 (nearest, log scale)";
    (*notes)["batch_size"] = tc.batch_size;
  }
  return tc;
}

EvalReport run_benchmark(const Model& model, const std::string& benchmark, const RunConfig& cfg,
                         const std::string& fingerprint) {
  const std::uint64_t seed = cfg.seed();
  EvalReport r;
  if (benchmark == "relatedness") {
    const auto set = load_relatedness(cfg.path("relatedness"));
    RelatednessOptions opt;
    std::map<std::string, double> aoa;
    if (cfg.has("aoa")) {
      aoa = load_aoa(cfg.path("aoa"));
      opt.aoa = &aoa;
    }
    if (cfg.has("aoa_threshold")) opt.aoa_threshold = cfg.number("aoa_threshold");
    if (cfg.has("category")) opt.category = cfg.get("category");
    r = eval_relatedness(extract_rep_table(model, words_of(set)), set, opt);
  } else if (benchmark == "lexical_relation") {
    const auto set = load_relations(cfg.path("relations"));
    LexicalRelationOptions opt;
    opt.seed = seed;
    r = eval_lexical_relation(extract_rep_table(model, words_of(set)), set, opt);
  } else if (benchmark == "semantic_features") {
    const auto set = load_feature_norms(cfg.path("norms"));
    SemanticFeatureOptions opt;
    opt.seed = seed;
    opt.splits = cfg.size("sem_splits");
    opt.n_components = cfg.size("pls_components");
    r = eval_semantic_features(extract_rep_table(model, words_of(set)), set, opt);
  } else if (benchmark == "pos") {
    const auto set = load_pos(cfg.path("pos"));
    PosOptions opt;
    opt.seed = seed;
    opt.splits = cfg.size("pos_splits");
    opt.c_grid.clear();
    RunConfig tmp;
    for (const auto& c : cfg.list("svc_grid")) {
      tmp.set("peak_lr", c);
      opt.c_grid.push_back(tmp.number("peak_lr"));
    }
    r = eval_pos(extract_rep_table(model, words_of(set)), set, opt);
  } else if (benchmark == "context") {
    const auto set = load_sentence_pairs(cfg.path("sentence_pairs"));
    ContextOptions opt;
    opt.segment_width = cfg.size("segment_width");
    opt.clip_proxy = cfg.flag("clip_proxy");
    r = eval_context_understanding(model, set, opt);
  } else if (benchmark == "brain") {
    const auto s = cfg.list("brain_sentences"), v = cfg.list("brain_responses"), c = cfg.list("brain_ceilings");
    if (s.empty() || s.size() != v.size() || s.size() != c.size()) {
      throw ContractError("brain: brain_sentences, brain_responses and brain_ceilings need equal-length lists");
    }
    std::vector<ResponseSet> sets;
    std::vector<std::vector<Tensor>> reps;
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (const auto* p : {&s[i], &v[i], &c[i]})
        if (!std::filesystem::exists(*p)) throw ContractError("brain: path does not exist: " + *p);
      sets.push_back(load_response_set(s[i], v[i], c[i]));
      reps.push_back(sentence_layer_matrices(model, sets.back().sentences));
    }
    BrainOptions opt;
    opt.seed = seed;
    opt.splits = cfg.size("brain_splits");
    opt.ridge_lambda = cfg.number("ridge_lambda");
    r = eval_brain_response(sets, reps, opt);
  } else {
    throw ContractError("unknown benchmark '" + benchmark + "'");
  }
  r.config_fingerprint = fingerprint;
  return r;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void write_loss_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open " + path.string() + " for writing");
  out << "epoch,step,train_loss,eval_loss\n";
  for (const auto& e : log)
    out << e.epoch << ',' << e.step << ',' << fmt(e.train_loss) << ',' << (e.eval_loss ? fmt(*e.eval_loss) : "")
        << '\n';
}

// ---------------------------------------------------------------------------
// Sweep aggregation

std::vector<SweepSummaryRow> summarize_sweep(const std::vector<SweepRow>& rows) {
  std::map<std::tuple<std::string, std::size_t, std::string>, std::vector<double>> cells;
  for (const auto& r : rows)
    if (r.score) cells[{r.variant, r.scale, r.benchmark}].push_back(*r.score);
  std::vector<SweepSummaryRow> out;
  for (const auto& [key, v] : cells) {
    SweepSummaryRow s{std::get<0>(key), std::get<1>(key), std::get<2>(key), v.size(), 0.0, 0.0};
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - s.mean) * (x - s.mean);
      s.se = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
    }
    out.push_back(s);
  }
  return out;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open " + path.string() + " for writing");
  out << "regime,scale,seed,benchmark,score,status\n";
  for (const auto& r : rows) {
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out << r.variant << ',' << r.scale << ',' << r.seed << ',' << r.benchmark << ',' << (r.score ? fmt(*r.score) : "")
        << ',' << status << '\n';
  }
}

std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 6) throw IngestError(path.string() + ": malformed sweep row: " + line);
    SweepRow r;
    r.variant = f[0];
    r.scale = std::stoull(f[1]);
    r.seed = std::stoull(f[2]);
    r.benchmark = f[3];
    if (!f[4].empty()) r.score = std::stod(f[4]);
    r.status = f[5];
    rows.push_back(r);
  }
  return rows;
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SweepSummaryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open " + path.string() + " for writing");
  out << "regime,scale,benchmark,n,mean,se\n";
  for (const auto& r : rows)
    out << r.variant << ',' << r.scale << ',' << r.benchmark << ',' << r.n << ',' << fmt(r.mean) << ',' << fmt(r.se)
        << '\n';
}

// ---------------------------------------------------------------------------
// Commands

namespace {

struct Run {
  RunConfig cfg;
  std::vector<std::string> argv;
  std::ostream& out;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  std::string started = utc_now();

  std::filesystem::path out_dir() const {
    std::filesystem::path d = cfg.get("out");
    std::filesystem::create_directories(d);
    return d;
  }

  Manifest manifest(const std::string& command) const {
    Manifest m;
    m.command = command;
    m.argv = argv;
    m.config = cfg.canonical();
    m.fingerprint = cfg.fingerprint();
    m.started_at = started;
    return m;
  }

  void finish(Manifest& m, const std::filesystem::path& path) const {
    m.finished_at = utc_now();
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(path, m);
  }
};

void save_atomically(const Model& model, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  save_checkpoint(model, tmp);
  std::filesystem::rename(tmp, path);
}

int cmd_train(Run& run) {
  const auto dir = run.out_dir();
  Manifest m = run.manifest("train");
  const auto ckpt = dir / "checkpoint.lgck", loss = dir / "loss.csv";
  const Corpus corpus = load_run_corpus(run.cfg);
  Model model = build_model(run.cfg, corpus);
  const TrainConfig tc = train_config_from(run.cfg, model.fusion().style, corpus.token_count, &m.notes);
  m.notes["records"] = corpus.records.size();
  m.notes["vocab_size"] = model.vocab().size();
  m.artifacts = {ckpt.filename().string(), loss.filename().string()};
  save_atomically(model, ckpt);
  std::vector<EpochLog> log;
  write_loss_csv(loss, log);
  try {
    log = train_model(model, corpus, tc, [&](const Model& mdl, const EpochLog& e) {
      log.push_back(e);
      save_atomically(mdl, ckpt);
      write_loss_csv(loss, log);
      run.out << "epoch " << e.epoch << " step " << e.step << " train_loss " << fmt(e.train_loss)
              << (e.eval_loss ? " eval_loss " + fmt(*e.eval_loss) : "") << '\n';
    });
  } catch (const TrainingError& e) {
    m.status = std::string("failed: ") + e.what() + " (last good checkpoint retained)";
    m.notes["completed_epochs"] = log.size();
    run.finish(m, dir / "train.manifest.json");
    throw;
  }
  write_loss_csv(loss, log);
  m.notes["completed_epochs"] = log.size();
  run.finish(m, dir / "train.manifest.json");
  return 0;
}

std::string eval_fingerprint(const RunConfig& cfg, const std::string& ckpt_path) {
  auto j = cfg.canonical();
  j.erase("checkpoint");
  j["checkpoint_sha256"] = sha256_file(ckpt_path);
  return sha256_hex(j.dump());
}

int cmd_eval(Run& run) {
  const std::string ckpt = run.cfg.path("checkpoint");
  const std::string bench = run.cfg.get("benchmark");
  if (std::find(kBenchmarkIds.begin(), kBenchmarkIds.end(), bench) == kBenchmarkIds.end()) {
    throw ContractError("--benchmark must be one of relatedness, lexical_relation, semantic_features, pos, context, "
                        "brain; got '" + bench + "'");
  }
  const Model model = load_checkpoint(ckpt);
  const auto dir = run.out_dir();
  Manifest m = run.manifest("eval");
  m.fingerprint = eval_fingerprint(run.cfg, ckpt);
  const EvalReport r = run_benchmark(model, bench, run.cfg, m.fingerprint);
  const auto report = dir / (bench + ".json");
  write_report(report, r);
  m.artifacts = {report.filename().string()};
  m.notes["final_score"] = r.final_score;
  m.notes["selected_layer"] = r.selected_layer;
  run.out << bench << ": " << fmt(r.final_score) << " (layer " << r.selected_layer << ")\n";
  run.finish(m, dir / (bench + ".manifest.json"));
  return 0;
}

int cmd_sweep(Run& run) {
  const auto scales_s = run.cfg.list("scales"), seeds_s = run.cfg.list("seeds"), variants = run.cfg.list("variants");
  const auto benchmarks = run.cfg.list("benchmarks");
  if (scales_s.empty() || seeds_s.empty() || variants.empty() || benchmarks.empty()) {
    throw ContractError("sweep needs at least one of each: scales, seeds, variants, benchmarks");
  }
  for (const auto& b : benchmarks)
    if (std::find(kBenchmarkIds.begin(), kBenchmarkIds.end(), b) == kBenchmarkIds.end())
      throw ContractError("unknown benchmark '" + b + "'");
  auto parse_count = [](const std::string& key, const std::string& s) -> std::uint64_t {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      if (!s.empty() && s[0] != '-') v = std::stoull(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw ContractError(key + ": '" + s + "' is not a non-negative integer");
    return v;
  };
  std::vector<std::size_t> scales;
  std::vector<std::uint64_t> seeds;
  for (const auto& s : scales_s) scales.push_back(parse_count("scales", s));
  for (const auto& s : seeds_s) seeds.push_back(parse_count("seeds", s));
  for (const auto& v : variants) {
    const auto colon = v.find(':');
    if (colon == std::string::npos) throw ContractError("variant '" + v + "' must be regime:fusion");
    parse_regime(v.substr(0, colon));
    parse_fusion_style(v.substr(colon + 1));
  }
  (void)run.cfg.path("corpus");
  const auto dir = run.out_dir();
  Manifest m = run.manifest("sweep");
  std::vector<SweepRow> rows;
  std::map<std::size_t, Corpus> corpora;
  for (const auto& v : variants) {
    const auto colon = v.find(':');
    for (std::size_t scale : scales) {
      for (std::uint64_t seed : seeds) {
        RunConfig c = run.cfg;
        c.set("regime", v.substr(0, colon));
        c.set("fusion", v.substr(colon + 1));
        c.set("token_budget", std::to_string(scale));
        c.set("seed", std::to_string(seed));
        std::string cell_name = v + "_" + std::to_string(scale) + "_" + std::to_string(seed);
        std::replace(cell_name.begin(), cell_name.end(), ':', '-');
        const auto cell = dir / "cells" / cell_name;
        std::filesystem::create_directories(cell);
        auto fail_all = [&](const std::string& why) {
          for (const auto& b : benchmarks) rows.push_back({v, scale, seed, b, std::nullopt, "error: " + why});
        };
        try {
          if (!corpora.count(scale)) corpora.emplace(scale, load_run_corpus(c));
          const Corpus& corpus = corpora.at(scale);
          Model model = build_model(c, corpus);
          nlohmann::ordered_json notes;
          const TrainConfig tc = train_config_from(c, model.fusion().style, corpus.token_count, &notes);
          const auto log = train_model(model, corpus, tc);
          write_loss_csv(cell / "loss.csv", log);
          save_checkpoint(model, cell / "checkpoint.lgck");
          const std::string fp = eval_fingerprint(c, (cell / "checkpoint.lgck").string());
          for (const auto& b : benchmarks) {
            try {
              const EvalReport r = run_benchmark(model, b, c, fp);
              write_report(cell / (b + ".json"), r);
              rows.push_back({v, scale, seed, b, r.final_score, "ok"});
            } catch (const Error& e) {
              rows.push_back({v, scale, seed, b, std::nullopt, std::string("error: ") + e.what()});
            }
          }
          run.out << cell_name << " done\n";
        } catch (const Error& e) {
          fail_all(e.what());
          run.out << cell_name << " failed: " << e.what() << '\n';
        }
      }
    }
  }
  write_sweep_csv(dir / "sweep.csv", rows);
  write_summary_csv(dir / "summary.csv", summarize_sweep(rows));
  m.artifacts = {"sweep.csv", "summary.csv", "cells/"};
  std::size_t failed = 0;
  for (const auto& r : rows) failed += !r.score;
  m.notes["cells"] = variants.size() * scales.size() * seeds.size();
  m.notes["failed_rows"] = failed;
  run.finish(m, dir / "sweep.manifest.json");
  return 0;
}

int cmd_synth(Run& run) {
  const auto dir = run.out_dir();
  Manifest m = run.manifest("synth");
  SynthOptions so;
  so.noise = run.cfg.number("noise");
  const std::uint64_t seed = run.cfg.seed();
  const SynthWorld world =
      synth_world(seed, run.cfg.size("n_pairs"), run.cfg.size("vocab_size"), run.cfg.size("feature_dim"), so);
  const std::uint64_t ds = run.cfg.has("dataset_seed") ? static_cast<std::uint64_t>(run.cfg.integer("dataset_seed"))
                                                       : seed;
  write_synth_world(world, dir, ds);
  m.artifacts = {"corpus.jsonl",       "features.fvec",      "similarity.tsv",      "relatedness.tsv",
                 "relations.tsv",      "norms.tsv",          "pos.tsv",             "sentence_pairs.tsv",
                 "brain_sentences.tsv", "brain_responses.fvec", "brain_ceilings.tsv"};
  std::size_t tokens = 0;
  for (const auto& r : world.records) tokens += count_tokens(r.caption);
  m.notes["records"] = world.records.size();
  m.notes["tokens"] = tokens;
  m.notes["content_words"] = world.content_words().size();
  run.out << "wrote " << world.records.size() << " records (" << tokens << " tokens) to " << dir.string() << '\n';
  run.finish(m, dir / "synth.manifest.json");
  return 0;
}

std::shared_ptr<ScoreBackend> make_backend(const RunConfig& cfg) {
  const std::string kind = cfg.get("scorer");
  if (kind == "mock") return std::make_shared<MockBackend>();
  if (kind == "model") return std::make_shared<ModelBackend>(std::make_shared<Model>(load_checkpoint(cfg.path("checkpoint"))));
  if (kind == "http") {
    HttpOptions h;
    h.host = cfg.get("scorer_host");
    h.port = static_cast<int>(cfg.integer("scorer_port"));
    h.timeout = std::chrono::milliseconds(cfg.integer("timeout_ms"));
    h.max_in_flight = std::max<std::size_t>(1, cfg.size("threads"));
    return std::make_shared<HttpBackend>(h);
  }
  throw ContractError("scorer must be mock, model or http; got '" + kind + "'");
}

int cmd_benchgen(Run& run) {
  const auto targets = load_targets(run.cfg.path("targets"));
  const auto sentences = load_target_sentences(run.cfg.path("sentences"));
  std::vector<std::string> vocab;
  if (run.cfg.has("candidates")) {
    std::ifstream in(run.cfg.path("candidates"));
    for (std::string w; std::getline(in, w);) {
      w = normalize_caption(w);
      if (!w.empty()) vocab.push_back(w);
    }
  } else {
    std::vector<std::string> all;
    for (const auto& [t, ss] : sentences) all.insert(all.end(), ss.begin(), ss.end());
    vocab = frequent_words(all, run.cfg.size("candidate_count"));
  }
  ScorerOptions so;
  so.per_token = run.cfg.flag("per_token");
  ScorerClient client(make_backend(run.cfg), so);
  if (run.cfg.has("cache")) client.load_cache(run.cfg.path("cache"));
  const auto dir = run.out_dir();
  Manifest m = run.manifest("benchgen");
  BuildOptions bo;
  bo.sentences_per_pair = run.cfg.size("sentences_per_pair");
  const BuildResult res = build_benchmark(client, targets, sentences, vocab, bo);
  audit_candidates(res.pairs);
  write_sentence_pairs(dir / "sentence_pairs.tsv", res.set);
  write_candidates_tsv(dir / "candidates.tsv", res.pairs);
  client.save_cache(dir / "scorer_cache.tsv");
  m.artifacts = {"sentence_pairs.tsv", "candidates.tsv", "scorer_cache.tsv"};
  m.notes["pairs"] = res.pairs.size();
  m.notes["failures"] = res.failures;
  m.notes["warnings"] = res.warnings;
  m.notes["candidate_words"] = vocab.size();
  m.notes["backend_calls"] = client.backend_calls();
  m.notes["surprisal"] = so.per_token ? "per-token" : "total";
  m.notes["criterion"] = "1.5 * S(dist_new) - S(dist), minimised";
  m.notes["grammaticality"] = "not screened beyond the surprisal criterion";
  run.out << "built " << res.pairs.size() << " pairs (" << res.failures << " failures, " << client.backend_calls()
          << " scorer calls)\n";
  run.finish(m, dir / "benchgen.manifest.json");
  return 0;
}

int cmd_analyze_likeness(Run& run) {
  const auto likeness =
      human_likeness(load_pair_scores(run.cfg.path("model_sims")), load_pair_scores(run.cfg.path("human")));
  const auto dir = run.out_dir();
  Manifest m = run.manifest("analyze likeness");
  write_likeness_csv(dir / "likeness.csv", likeness);
  nlohmann::ordered_json j;
  j["pairs"] = likeness_to_json(likeness);
  j["regressions"] = nlohmann::ordered_json::array();
  if (run.cfg.has("word_features")) {
    const auto table = load_word_features(run.cfg.path("word_features"));
    for (const auto& f : run.cfg.list("regress_features")) {
      try {
        j["regressions"].push_back(regression_to_json(regress_likeness(likeness, table, f)));
      } catch (const ContractError& e) {
        m.notes["skipped_" + f] = e.what();
      }
    }
  }
  std::ofstream(dir / "likeness.json") << j.dump(2) << '\n';
  m.artifacts = {"likeness.csv", "likeness.json"};
  run.finish(m, dir / "likeness.manifest.json");
  return 0;
}

int cmd_analyze_corr(Run& run) {
  auto load_all = [&](const std::string& key) {
    std::vector<PairScores> v;
    for (const auto& p : run.cfg.list(key)) {
      if (!std::filesystem::exists(p)) throw ContractError(key + ": path does not exist: " + p);
      v.push_back(load_pair_scores(p));
    }
    return v;
  };
  const auto r = model_model_report(load_all("sims_a"), load_all("sims_b"));
  const auto dir = run.out_dir();
  Manifest m = run.manifest("analyze corr");
  nlohmann::ordered_json j;
  j["spearman"] = r.rho;
  j["shared_pairs"] = r.shared_pairs;
  j["self_a"] = r.self_a ? nlohmann::ordered_json(*r.self_a) : nlohmann::ordered_json(nullptr);
  j["self_b"] = r.self_b ? nlohmann::ordered_json(*r.self_b) : nlohmann::ordered_json(nullptr);
  std::ofstream(dir / "corr.json") << j.dump(2) << '\n';
  run.out << "spearman " << fmt(r.rho) << '\n';
  m.artifacts = {"corr.json"};
  run.finish(m, dir / "corr.manifest.json");
  return 0;
}

int cmd_analyze_split(Run& run) {
  const Model model = load_checkpoint(run.cfg.path("checkpoint"));
  const auto set = load_relatedness(run.cfg.path("relatedness"));
  const auto cats = run.cfg.list("categories");
  const auto reports = split_scores(extract_rep_table(model, words_of(set)), set, cats);
  const auto dir = run.out_dir();
  Manifest m = run.manifest("analyze split");
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [c, r] : reports) j[c] = report_to_json(r);
  std::ofstream(dir / "split.json") << j.dump(2) << '\n';
  m.artifacts = {"split.json"};
  run.finish(m, dir / "split.manifest.json");
  return 0;
}

// Per-word semantic-feature MAP of model A minus model B, regressed on word features.
int cmd_analyze_semdiff(Run& run) {
  const auto diff = per_word_difference(per_word_test_map(read_report(run.cfg.path("report_a"))),
                                        per_word_test_map(read_report(run.cfg.path("report_b"))));
  const auto table = load_word_features(run.cfg.path("word_features"));
  const auto dir = run.out_dir();
  Manifest m = run.manifest("analyze semdiff");
  nlohmann::ordered_json j;
  j["per_word_difference"] = diff;
  j["regressions"] = nlohmann::ordered_json::array();
  for (const auto& f : run.cfg.list("regress_features")) {
    try {
      j["regressions"].push_back(regression_to_json(regress_word_values(diff, table, f)));
    } catch (const ContractError& e) {
      m.notes["skipped_" + f] = e.what();
    }
  }
  std::ofstream(dir / "semdiff.json") << j.dump(2) << '\n';
  m.notes["words"] = diff.size();
  m.artifacts = {"semdiff.json"};
  run.finish(m, dir / "semdiff.manifest.json");
  return 0;
}

int cmd_analyze_sims(Run& run) {
  const Model model = load_checkpoint(run.cfg.path("checkpoint"));
  const auto set = load_relatedness(run.cfg.path("relatedness"));
  const RepTable reps = extract_rep_table(model, words_of(set));
  std::size_t layer = 0;
  if (run.cfg.get("layer") == "best") layer = eval_relatedness(reps, set).selected_layer;
  else layer = run.cfg.size("layer");
  const auto sims = model_pair_sims(reps, set, layer);
  PairScores human;
  for (const auto& [k, v] : human_pair_scores(set))
    if (sims.count(k)) human[k] = v;
  const auto dir = run.out_dir();
  Manifest m = run.manifest("analyze sims");
  write_pair_scores(dir / "model_sims.tsv", sims);
  write_pair_scores(dir / "human.tsv", human);
  m.notes["layer"] = layer;
  m.artifacts = {"model_sims.tsv", "human.tsv"};
  run.finish(m, dir / "sims.manifest.json");
  return 0;
}

int cmd_serve(Run& run) {
  ScorerServer server(make_backend(run.cfg));
  const std::string host = run.cfg.get("host");
  const int port = static_cast<int>(run.cfg.integer("port"));
  run.out << "serving /score and /score_batch on " << host << ":" << port << std::endl;
  server.listen_blocking(host, port);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"glab: train and probe small grounded language models"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "INI config file; flags override its keys");
  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::Option*> flag_opts;
  for (const auto& k : config_keys()) {
    flag_opts[k.name] = app.add_option("--" + k.name, flag_values[k.name], k.help)->group("[" + k.section + "]");
  }
  std::string command;
  auto add = [&](CLI::App* parent, const std::string& name, const std::string& help) {
    auto* sub = parent->add_subcommand(name, help)->fallthrough();
    sub->callback([&command, sub] {
      std::string full = sub->get_name();
      for (auto* p = sub->get_parent(); p && p->get_parent(); p = p->get_parent()) full = p->get_name() + " " + full;
      if (full.size() > command.size()) command = full;
    });
    return sub;
  };
  add(&app, "train", "train a model from a corpus");
  add(&app, "eval", "run one benchmark on a checkpoint");
  add(&app, "sweep", "train and evaluate a scale x seed x regime grid");
  add(&app, "benchgen", "build context sentence pairs with a surprisal scorer");
  add(&app, "synth", "generate a synthetic grounded world and its datasets");
  add(&app, "serve", "serve the scoring protocol from a checkpoint or mock");
  auto* analyze = add(&app, "analyze", "post-hoc analyses");
  analyze->require_subcommand(1);
  add(analyze, "likeness", "per-pair human-likeness ranks and word-feature regressions");
  add(analyze, "corr", "model-to-model judgment correlation");
  add(analyze, "split", "relatedness per category");
  add(analyze, "sims", "write model and human pair scores for a checkpoint");
  add(analyze, "semdiff", "per-word semantic-feature MAP difference regressed on word features");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  std::vector<std::string> args(argv, argv + argc);
  try {
    Run run{RunConfig{}, args, out};
    if (!config_path.empty()) run.cfg.merge_ini(config_path);
    for (const auto& [k, opt] : flag_opts)
      if (opt->count()) run.cfg.set(k, flag_values[k]);
    if (command == "train") return cmd_train(run);
    if (command == "eval") return cmd_eval(run);
    if (command == "sweep") return cmd_sweep(run);
    if (command == "benchgen") return cmd_benchgen(run);
    if (command == "synth") return cmd_synth(run);
    if (command == "serve") return cmd_serve(run);
    if (command == "analyze likeness") return cmd_analyze_likeness(run);
    if (command == "analyze corr") return cmd_analyze_corr(run);
    if (command == "analyze split") return cmd_analyze_split(run);
    if (command == "analyze sims") return cmd_analyze_sims(run);
    if (command == "analyze semdiff") return cmd_analyze_semdiff(run);
    err << "error: unknown command '" << command << "'\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.is_usage() ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace glab
