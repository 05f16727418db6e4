// Command-line front end: run experiments, score predictions, generate corpora.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "protoner/corpus.hpp"
#include "protoner/errors.hpp"
#include "protoner/eval.hpp"
#include "protoner/experiment.hpp"
#include "protoner/synthetic.hpp"

namespace fs = std::filesystem;
using namespace protoner;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

void configure_logging() {
  spdlog::set_pattern("[%l] %v");
  if (const char* level = std::getenv("PROTONER_LOG_LEVEL")) {
    spdlog::set_level(spdlog::level::from_str(level));
  }
}

int cmd_run(const std::string& spec_path, const std::string& out, bool history, std::size_t workers) {
  ExperimentSpec spec = load_experiment_spec(spec_path);
  if (history) spec.history = true;
  if (workers > 0) spec.workers = workers;
  const fs::path outdir = out.empty() ? spec.output : fs::path(out);
  if (outdir.empty()) throw ConfigError("no output directory: pass --out or set 'output' in the experiment file");
  const ExperimentData data = load_experiment_data(spec);
  spdlog::info("{} train / {} validation sentences, {} classes x {} regimes x {} seeds", data.train.size(),
               data.validation.size(), spec.classes.size() + spec.validation_classes.size(), spec.regimes.size(),
               spec.seeds.size());
  const ExperimentResult result = run_experiment(spec, data, outdir);
  emit_reports(result, outdir);
  write_results_table(std::cout, result.rows);
  if (result.failures > 0) {
    spdlog::error("{} of {} cells failed; see {}", result.failures, result.cells.size(),
                  (outdir / "results.txt").string());
    return kExitFailure;
  }
  return kExitOk;
}

ConllDocument read_predictions(const std::string& path) {
  try {
    return read_conll(path, Scheme::bio);
  } catch (const ParseError&) {
    return read_conll(path, Scheme::to);
  }
}

int cmd_score(const std::string& gold_path, const std::string& pred_path, const std::string& cls) {
  const Corpus gold = read_conll(gold_path, Scheme::bio).sentences;
  const Corpus pred = read_predictions(pred_path).sentences;
  const Scheme scheme = detect_scheme(pred);
  if (gold.size() != pred.size()) {
    throw ConfigError("gold has " + std::to_string(gold.size()) + " sentences, predictions have " +
                      std::to_string(pred.size()));
  }
  std::vector<std::vector<std::string>> tags;
  tags.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].tokens != gold[i].tokens) {
      throw ConfigError("sentence " + std::to_string(i + 1) + ": tokens differ between gold and predictions");
    }
    tags.push_back(pred[i].tags);
  }
  const F1Report r = chunk_f1(gold, tags, cls, scheme);
  std::printf("class %s (predictions in %s)\n", cls.c_str(), std::string(scheme_name(scheme)).c_str());
  std::printf("tp %zu  fp %zu  fn %zu\n", r.tp, r.fp, r.fn);
  std::printf("precision %.4f  recall %.4f  F1 %.4f\n", r.precision(), r.recall(), r.f1());
  return kExitOk;
}

int cmd_synth(const std::string& spec_path, const std::string& out) {
  const SyntheticSpec spec = load_synthetic_spec(spec_path);
  const ExperimentData data = generate_synthetic_data(spec);
  fs::create_directories(out);
  write_conll((fs::path(out) / "train.conll").string(), data.train);
  write_conll((fs::path(out) / "validation.conll").string(), data.validation);
  data.table.save((fs::path(out) / "embeddings.txt").string());
  spdlog::info("wrote {} train and {} validation sentences, {} embeddings to {}", data.train.size(),
               data.validation.size(), data.table.size(), out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Few-shot named entity recognition experiments"};
  app.require_subcommand(1);

  std::string spec_path, out;
  bool history = false;
  std::size_t workers = 0;
  auto* run = app.add_subcommand("run", "Train and score every (class, regime, seed) cell");
  run->add_option("--spec", spec_path, "Experiment spec (JSON)")->required();
  run->add_option("--out", out, "Output directory");
  run->add_flag("--history", history, "Record per-epoch test F1");
  run->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

  std::string gold, pred, cls;
  auto* score = app.add_subcommand("score", "Chunk F1 of a prediction file against gold");
  score->add_option("--gold", gold, "Gold CoNLL file (BIO)")->required();
  score->add_option("--pred", pred, "Predicted CoNLL file (BIO or TO)")->required();
  score->add_option("--class", cls, "Target class")->required();

  std::string synth_spec, synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus and embedding table");
  synth->add_option("--spec", synth_spec, "Synthetic corpus spec (JSON)")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(spec_path, out, history, workers);
    if (*score) return cmd_score(gold, pred, cls);
    if (*synth) return cmd_synth(synth_spec, synth_out);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const ParseError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
