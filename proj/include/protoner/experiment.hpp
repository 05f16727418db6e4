#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "protoner/corpus.hpp"
#include "protoner/embeddings.hpp"
#include "protoner/eval.hpp"
#include "protoner/regimes.hpp"
#include "protoner/synthetic.hpp"

namespace protoner {

struct CorpusSource {
  std::optional<SyntheticSpec> synthetic;
  std::filesystem::path train;
  std::filesystem::path validation;
};

struct EmbeddingSource {
  enum class Kind { file, random, synthetic };
  Kind kind = Kind::synthetic;
  std::filesystem::path path;
  std::size_t dim = 50;
  std::uint64_t seed = 1;
  double scale = 0.1;
};

struct ExperimentSpec {
  CorpusSource corpus;
  EmbeddingSource embeddings;
  std::vector<std::string> classes;
  std::vector<Regime> regimes;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4};
  Scheme scheme = Scheme::bio;
  RegimeConfig config;
  // Classes whose per-epoch histories pick the reported epoch.
  std::vector<std::string> validation_classes;
  bool history = false;
  bool write_predictions = false;
  bool save_checkpoints = false;
  std::size_t workers = 1;
  std::filesystem::path output;
};

/// Relative paths resolve against base_dir. Throws ConfigError.
ExperimentSpec parse_experiment_spec(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

/// Applies `{"epochs": 10, "M": 32, ...}`. Unknown keys are ConfigErrors.
void apply_config_overrides(RegimeConfig& cfg, const nlohmann::json& overrides);

struct ExperimentData {
  Corpus train;
  Corpus validation;
  EmbeddingTable table{1};
};

/// Corpus and embedding table of a synthetic spec, seeded by spec.seed.
ExperimentData generate_synthetic_data(const SyntheticSpec& spec);
ExperimentData load_experiment_data(const ExperimentSpec& spec);

/// Training seed of one (class, seed) cell; shared by its regimes so warm
/// regimes can reuse one pretrained model.
std::uint64_t cell_seed(const std::string& cls, std::uint64_t seed);

struct CellResult {
  std::string cls;
  Regime regime = Regime::base;
  std::uint64_t seed = 0;
  bool validation = false;
  std::optional<F1Report> report;  // empty when the cell failed
  std::vector<double> history;     // per-epoch test F1 when captured
  std::string error;

  bool ok() const { return report.has_value(); }
};

struct ResultRow {
  std::string cls;
  std::string regime;
  double mean = 0.0;
  double stdev = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> f1s;
  std::size_t selected_epoch = 0;

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

struct ExperimentResult {
  std::vector<CellResult> cells;
  std::vector<ResultRow> rows;
  std::size_t failures = 0;
};

/// Trains and scores every (class, regime, seed) cell. Failed cells are
/// recorded and skipped. Artifacts (predictions, checkpoints) go to outdir.
ExperimentResult run_experiment(const ExperimentSpec& spec, const ExperimentData& data,
                                const std::optional<std::filesystem::path>& outdir = std::nullopt);

/// Groups cells into rows per (class, regime) in spec order. With captured
/// histories and validation classes, scores are read at the epoch chosen on
/// the validation cells of the same regime; otherwise at the last epoch.
std::vector<ResultRow> aggregate_rows(const ExperimentSpec& spec, const std::vector<CellResult>& cells);

/// mean and sample standard deviation (0 for a single value).
std::pair<double, double> mean_std(const std::vector<double>& values);

std::string format_double(double v);
void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_results_csv(std::istream& in);
void write_history_csv(std::ostream& out, const std::vector<CellResult>& cells);
/// Aligned text table; `*` marks the best mean of each class.
void write_results_table(std::ostream& out, const std::vector<ResultRow>& rows);

/// results.csv, history.csv and results.txt. Throws std::runtime_error when
/// the directory cannot be written.
void emit_reports(const ExperimentResult& result, const std::filesystem::path& outdir);

}  // namespace protoner
