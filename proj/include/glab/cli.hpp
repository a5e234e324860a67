#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "glab/benchmarks.hpp"
#include "glab/model.hpp"
#include "glab/train.hpp"

namespace glab {

std::string tool_version();
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// RunConfig: flat keys grouped in INI sections; every key is also a flag.

struct ConfigKey {
  std::string name, section, default_value, help;
};
const std::vector<ConfigKey>& config_keys();

class RunConfig {
 public:
  RunConfig();  // every key at its default

  // Sections are informational; keys are global. Unknown keys are a contract error.
  void merge_ini(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  bool has(const std::string& key) const { return !get(key).empty(); }
  std::string path(const std::string& key) const;  // required, must exist
  double number(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::size_t size(const std::string& key) const;
  std::optional<std::size_t> size_or_auto(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;  // comma-separated
  std::uint64_t seed() const;  // mandatory

  // Sorted key/value object without machine-local keys (out, threads).
  nlohmann::ordered_json canonical() const;
  std::string fingerprint() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Manifest

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::ordered_json config;
  std::string fingerprint;
  std::vector<std::string> artifacts;
  nlohmann::ordered_json notes = nlohmann::ordered_json::object();
  std::string status = "ok";
  std::string started_at, finished_at;
  double wall_seconds = 0.0;
};
nlohmann::ordered_json manifest_to_json(const Manifest& m);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

// ---------------------------------------------------------------------------
// Pipeline pieces shared by the commands

Corpus load_run_corpus(const RunConfig& cfg);
Model build_model(const RunConfig& cfg, const Corpus& corpus);
// Resolves "auto" epochs and batch size; notes what was chosen.
TrainConfig train_config_from(const RunConfig& cfg, FusionStyle style, std::size_t corpus_tokens,
                              nlohmann::ordered_json* notes = nullptr);

inline const std::vector<std::string> kBenchmarkIds = {"relatedness", "lexical_relation", "semantic_features",
                                                      "pos",         "context",          "brain"};
// Loads the datasets named in `cfg` and runs one benchmark.
EvalReport run_benchmark(const Model& model, const std::string& benchmark, const RunConfig& cfg,
                         const std::string& fingerprint);

// Loss log, one row per epoch; values printed with round-trip precision.
void write_loss_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);

// ---------------------------------------------------------------------------
// Sweep aggregation

struct SweepRow {
  std::string variant;
  std::size_t scale = 0;
  std::uint64_t seed = 0;
  std::string benchmark;
  std::optional<double> score;
  std::string status = "ok";
};
struct SweepSummaryRow {
  std::string variant;
  std::size_t scale = 0;
  std::string benchmark;
  std::size_t n = 0;
  double mean = 0.0;
  double se = 0.0;  // sample sd / sqrt(n); 0 when n == 1
};
std::vector<SweepSummaryRow> summarize_sweep(const std::vector<SweepRow>& rows);
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);
std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SweepSummaryRow>& rows);

// Full command line. Exit codes: 0 ok, 1 runtime/numeric, 2 usage/contract.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace glab
