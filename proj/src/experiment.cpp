#include "protoner/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "protoner/errors.hpp"

namespace protoner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kTaskSalt = 0x7a5c0000;

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

void check_class_name(const std::string& cls) {
  if (cls.empty() || cls.find_first_of(",;\" \t\n") != std::string::npos) {
    throw ConfigError("invalid class name '" + cls + "'");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("invalid value for '" + key + "': " + e.what());
  }
}

std::size_t get_size(const json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw ConfigError("'" + key + "' must be a non-negative integer");
  return j.get<std::size_t>();
}

}  // namespace

void apply_config_overrides(RegimeConfig& cfg, const json& overrides) {
  check_keys(overrides,
             {"N", "p", "epochs", "steps_per_epoch", "warmup_epochs", "batch_in_domain", "batch_warmup", "support_cap",
              "query_cap", "lr", "l2", "dropout", "M", "b_O_init", "char_embedding", "char_hidden", "word_hidden"},
             "config");
  const std::map<std::string, std::size_t*> sizes = {
      {"N", &cfg.n_support},
      {"epochs", &cfg.epochs},
      {"steps_per_epoch", &cfg.proto_steps_per_epoch},
      {"warmup_epochs", &cfg.warmup_epochs},
      {"batch_in_domain", &cfg.batch_in_domain},
      {"batch_warmup", &cfg.batch_warmup},
      {"support_cap", &cfg.support_cap},
      {"query_cap", &cfg.query_cap},
      {"M", &cfg.proto_dim},
      {"char_embedding", &cfg.char_embedding},
      {"char_hidden", &cfg.char_hidden},
      {"word_hidden", &cfg.word_hidden},
  };
  const std::map<std::string, double*> reals = {
      {"p", &cfg.p_in_domain}, {"lr", &cfg.lr}, {"l2", &cfg.l2}, {"dropout", &cfg.dropout}, {"b_O_init", &cfg.outside_bias_init}};
  for (const auto& [key, value] : overrides.items()) {
    if (auto it = sizes.find(key); it != sizes.end()) {
      *it->second = get_size(value, key);
    } else {
      if (!value.is_number()) throw ConfigError("'" + key + "' must be a number");
      *reals.at(key) = value.get<double>();
    }
  }
  cfg.validate();
}

ExperimentSpec parse_experiment_spec(const json& j, const fs::path& base_dir) {
  check_keys(j,
             {"corpus", "embeddings", "classes", "regimes", "seeds", "scheme", "config", "validation_classes",
              "history", "write_predictions", "save_checkpoints", "workers", "output"},
             "experiment spec");
  ExperimentSpec spec;
  if (!j.contains("corpus")) throw ConfigError("experiment spec needs a corpus");
  const json& corpus = j.at("corpus");
  check_keys(corpus, {"synthetic", "train", "validation"}, "corpus");
  if (corpus.contains("synthetic")) {
    if (corpus.contains("train") || corpus.contains("validation")) {
      throw ConfigError("corpus: give either synthetic or train/validation paths");
    }
    const json& syn = corpus.at("synthetic");
    spec.corpus.synthetic = syn.is_string() ? load_synthetic_spec(resolve(base_dir, syn.get<std::string>()).string())
                                            : parse_synthetic_spec(syn);
  } else {
    if (!corpus.contains("train") || !corpus.contains("validation")) {
      throw ConfigError("corpus: train and validation paths are required");
    }
    spec.corpus.train = resolve(base_dir, get_as<std::string>(corpus.at("train"), "train"));
    spec.corpus.validation = resolve(base_dir, get_as<std::string>(corpus.at("validation"), "validation"));
  }

  const json emb = j.value("embeddings", json("synthetic"));
  if (emb.is_string()) {
    const auto s = emb.get<std::string>();
    if (s == "synthetic") {
      spec.embeddings.kind = EmbeddingSource::Kind::synthetic;
    } else {
      spec.embeddings.kind = EmbeddingSource::Kind::file;
      spec.embeddings.path = resolve(base_dir, s);
    }
  } else {
    check_keys(emb, {"path", "random"}, "embeddings");
    if (emb.contains("path") == emb.contains("random")) throw ConfigError("embeddings: give exactly one of path, random");
    if (emb.contains("path")) {
      spec.embeddings.kind = EmbeddingSource::Kind::file;
      spec.embeddings.path = resolve(base_dir, get_as<std::string>(emb.at("path"), "path"));
    } else {
      const json& r = emb.at("random");
      check_keys(r, {"dim", "seed", "scale"}, "embeddings.random");
      spec.embeddings.kind = EmbeddingSource::Kind::random;
      if (r.contains("dim")) spec.embeddings.dim = get_size(r.at("dim"), "dim");
      if (r.contains("seed")) spec.embeddings.seed = get_as<std::uint64_t>(r.at("seed"), "seed");
      if (r.contains("scale")) spec.embeddings.scale = get_as<double>(r.at("scale"), "scale");
      if (spec.embeddings.dim == 0 || !(spec.embeddings.scale > 0.0)) {
        throw ConfigError("embeddings.random: dim and scale must be positive");
      }
    }
  }
  if (spec.embeddings.kind == EmbeddingSource::Kind::synthetic && !spec.corpus.synthetic) {
    throw ConfigError("synthetic embeddings need a synthetic corpus");
  }

  if (!j.contains("classes")) throw ConfigError("experiment spec needs classes");
  spec.classes = get_as<std::vector<std::string>>(j.at("classes"), "classes");
  if (j.contains("validation_classes")) {
    spec.validation_classes = get_as<std::vector<std::string>>(j.at("validation_classes"), "validation_classes");
  }
  std::set<std::string> seen;
  for (const auto& c : spec.classes) {
    check_class_name(c);
    if (!seen.insert(c).second) throw ConfigError("class listed twice: " + c);
  }
  for (const auto& c : spec.validation_classes) {
    check_class_name(c);
    if (!seen.insert(c).second) throw ConfigError("validation class also listed elsewhere: " + c);
  }
  if (spec.classes.empty()) throw ConfigError("experiment spec needs at least one class");

  if (j.contains("regimes")) {
    for (const auto& name : get_as<std::vector<std::string>>(j.at("regimes"), "regimes")) {
      spec.regimes.push_back(parse_regime(name));
    }
  } else {
    spec.regimes.assign(kAllRegimes.begin(), kAllRegimes.end());
  }
  if (spec.regimes.empty()) throw ConfigError("experiment spec needs at least one regime");
  if (std::set<Regime>(spec.regimes.begin(), spec.regimes.end()).size() != spec.regimes.size()) {
    throw ConfigError("regime listed twice");
  }

  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    spec.seeds.clear();
    if (s.is_array()) {
      spec.seeds = get_as<std::vector<std::uint64_t>>(s, "seeds");
    } else {
      const std::size_t count = get_size(s, "seeds");
      for (std::size_t i = 1; i <= count; ++i) spec.seeds.push_back(i);
    }
  }
  if (spec.seeds.empty()) throw ConfigError("experiment spec needs at least one seed");
  if (std::set<std::uint64_t>(spec.seeds.begin(), spec.seeds.end()).size() != spec.seeds.size()) {
    throw ConfigError("seed listed twice");
  }

  if (j.contains("scheme")) spec.scheme = parse_scheme(get_as<std::string>(j.at("scheme"), "scheme"));
  if (j.contains("config")) apply_config_overrides(spec.config, j.at("config"));
  spec.config.validate();
  spec.history = j.contains("history") ? get_as<bool>(j.at("history"), "history") : false;
  spec.write_predictions = j.contains("write_predictions") ? get_as<bool>(j.at("write_predictions"), "write_predictions") : false;
  spec.save_checkpoints = j.contains("save_checkpoints") ? get_as<bool>(j.at("save_checkpoints"), "save_checkpoints") : false;
  if (!spec.validation_classes.empty() && !spec.history) {
    throw ConfigError("validation_classes select an epoch from histories; set history to true");
  }
  if (j.contains("workers")) spec.workers = get_size(j.at("workers"), "workers");
  if (spec.workers == 0) throw ConfigError("workers must be positive");
  if (j.contains("output")) spec.output = resolve(base_dir, get_as<std::string>(j.at("output"), "output"));
  return spec;
}

ExperimentSpec load_experiment_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment spec " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("experiment spec " + path.string() + ": " + e.what());
  }
  return parse_experiment_spec(j, path.parent_path());
}

ExperimentData generate_synthetic_data(const SyntheticSpec& spec) {
  Rng corpus_rng(spec.seed);
  Rng table_rng(Rng::mix(spec.seed + 1));
  SyntheticCorpus corpus = generate_synthetic_corpus(spec, corpus_rng);
  return {std::move(corpus.train), std::move(corpus.validation), synthesize_embeddings(spec, table_rng)};
}

ExperimentData load_experiment_data(const ExperimentSpec& spec) {
  ExperimentData data;
  if (spec.corpus.synthetic) {
    data = generate_synthetic_data(*spec.corpus.synthetic);
  } else {
    data.train = read_conll(spec.corpus.train.string()).sentences;
    data.validation = read_conll(spec.corpus.validation.string()).sentences;
  }
  switch (spec.embeddings.kind) {
    case EmbeddingSource::Kind::synthetic:
      break;
    case EmbeddingSource::Kind::file:
      data.table = EmbeddingTable::load(spec.embeddings.path.string());
      break;
    case EmbeddingSource::Kind::random: {
      std::set<std::string> vocab;
      for (const Corpus* c : {&data.train, &data.validation}) {
        for (const auto& s : *c) {
          for (const auto& t : s.tokens) vocab.insert(to_lower_ascii(t));
        }
      }
      const std::vector<std::string> words(vocab.begin(), vocab.end());
      Rng rng(spec.embeddings.seed);
      data.table = EmbeddingTable::random(words, spec.embeddings.dim, spec.embeddings.scale, rng);
      break;
    }
  }
  return data;
}

std::uint64_t cell_seed(const std::string& cls, std::uint64_t seed) {
  return Rng::mix(stable_hash(cls) ^ Rng::mix(seed));
}

// ---------------------------------------------------------------------------
// Runner

namespace {

struct Group {
  std::string cls;
  std::uint64_t seed = 0;
  bool validation = false;
  const TaskPool* pool = nullptr;
  std::size_t first_cell = 0;  // cells of this group: first_cell + r * seeds
};

std::string cell_stem(const std::string& cls, Regime r, std::uint64_t seed) {
  return cls + "_" + std::string(regime_name(r)) + "_seed" + std::to_string(seed);
}

void run_group(const Group& g, const ExperimentSpec& spec, const ExperimentData& data,
               const std::optional<fs::path>& outdir, std::vector<CellResult>& cells) {
  const std::size_t stride = spec.seeds.size();
  const std::uint64_t seed = cell_seed(g.cls, g.seed);
  auto cell_at = [&](std::size_t r) -> CellResult& { return cells[g.first_cell + r * stride]; };

  std::optional<TaskDataset> task;
  try {
    Rng task_rng(Rng::mix(seed ^ kTaskSalt));
    task = draw_task(*g.pool, spec.config.n_support, task_rng);
  } catch (const std::exception& e) {
    for (std::size_t r = 0; r < spec.regimes.size(); ++r) cell_at(r).error = std::string("task: ") + e.what();
    return;
  }
  const TrainingData training = task->training();
  RegimeConfig cfg = spec.config;
  cfg.seed = seed;

  std::optional<TrainedModel> pretrained;
  std::string pretrain_error;
  if (std::any_of(spec.regimes.begin(), spec.regimes.end(), is_warm_regime)) {
    try {
      pretrained = pretrain_out_of_domain(training, data.table, cfg);
    } catch (const std::exception& e) {
      pretrain_error = std::string("pretraining: ") + e.what();
    }
  }

  for (std::size_t r = 0; r < spec.regimes.size(); ++r) {
    CellResult& cell = cell_at(r);
    const Regime regime = spec.regimes[r];
    if (is_warm_regime(regime) && !pretrained) {
      cell.error = pretrain_error;
      continue;
    }
    cfg.regime = regime;
    TrainingHooks hooks;
    if (spec.history) {
      hooks.on_epoch = [&](std::size_t, TrainedModel& snapshot) -> std::optional<double> {
        const auto pred = snapshot.predict(task->test, data.table);
        return chunk_f1(task->test_gold, pred, g.cls, snapshot.scheme()).f1();
      };
    }
    try {
      TrainedModel model = train_regime(training, data.table, cfg, hooks, pretrained ? &*pretrained : nullptr);
      const auto pred = model.predict(task->test, data.table);
      cell.report = chunk_f1(task->test_gold, pred, g.cls, model.scheme());
      for (const auto& rec : model.history) {
        if (rec.f1) cell.history.push_back(*rec.f1);
      }
      if (outdir && spec.write_predictions) {
        fs::create_directories(*outdir / "predictions");
        std::ofstream out(*outdir / "predictions" / (cell_stem(g.cls, regime, g.seed) + ".txt"));
        write_conlleval(out, task->test_gold, pred, model.scheme());
      }
      if (outdir && spec.save_checkpoints) {
        fs::create_directories(*outdir / "checkpoints");
        save_checkpoint((*outdir / "checkpoints" / (cell_stem(g.cls, regime, g.seed) + ".json")).string(), model, cfg);
      }
      spdlog::info("{} {} seed {}: F1 {:.4f}", g.cls, regime_name(regime), g.seed, cell.report->f1());
    } catch (const std::exception& e) {
      cell.report.reset();
      cell.error = e.what();
      spdlog::error("{} {} seed {} failed: {}", g.cls, regime_name(regime), g.seed, e.what());
    }
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const ExperimentData& data,
                                const std::optional<fs::path>& outdir) {
  if (spec.classes.empty() || spec.regimes.empty() || spec.seeds.empty()) {
    throw ConfigError("experiment needs at least one class, regime and seed");
  }
  std::vector<std::pair<std::string, bool>> classes;
  for (const auto& c : spec.classes) classes.emplace_back(c, false);
  for (const auto& c : spec.validation_classes) classes.emplace_back(c, true);

  const std::size_t n_regimes = spec.regimes.size();
  const std::size_t n_seeds = spec.seeds.size();
  ExperimentResult result;
  result.cells.resize(classes.size() * n_regimes * n_seeds);

  std::vector<std::optional<TaskPool>> pools(classes.size());
  std::vector<Group> groups;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::string pool_error;
    try {
      pools[c] = make_task(data.train, data.validation, classes[c].first, spec.scheme);
    } catch (const std::exception& e) {
      pool_error = std::string("task: ") + e.what();
      spdlog::error("{}: {}", classes[c].first, pool_error);
    }
    for (std::size_t r = 0; r < n_regimes; ++r) {
      for (std::size_t s = 0; s < n_seeds; ++s) {
        CellResult& cell = result.cells[(c * n_regimes + r) * n_seeds + s];
        cell.cls = classes[c].first;
        cell.regime = spec.regimes[r];
        cell.seed = spec.seeds[s];
        cell.validation = classes[c].second;
        cell.error = pool_error;
      }
    }
    if (!pools[c]) continue;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      groups.push_back({classes[c].first, spec.seeds[s], classes[c].second, &*pools[c], c * n_regimes * n_seeds + s});
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < groups.size(); i = next++) run_group(groups[i], spec, data, outdir, result.cells);
  };
  const std::size_t n_workers = std::min(spec.workers, std::max<std::size_t>(groups.size(), 1));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
  }

  for (const auto& cell : result.cells) result.failures += cell.ok() ? 0 : 1;
  result.rows = aggregate_rows(spec, result.cells);
  return result;
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) throw ContractError("mean_std of no values");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

std::vector<ResultRow> aggregate_rows(const ExperimentSpec& spec, const std::vector<CellResult>& cells) {
  std::map<Regime, std::size_t> selected;
  if (spec.history && !spec.validation_classes.empty()) {
    for (Regime r : spec.regimes) {
      std::vector<std::vector<double>> histories;
      for (const auto& c : cells) {
        if (c.validation && c.regime == r && c.ok() && !c.history.empty()) histories.push_back(c.history);
      }
      if (histories.empty()) {
        spdlog::warn("{}: no validation histories; reporting the last epoch", regime_name(r));
        continue;
      }
      selected[r] = select_epoch(histories);
    }
  }
  std::vector<ResultRow> rows;
  for (const auto& cls : spec.classes) {
    for (Regime r : spec.regimes) {
      ResultRow row;
      row.cls = cls;
      row.regime = std::string(regime_name(r));
      const auto sel = selected.find(r);
      row.selected_epoch = sel != selected.end() ? sel->second : spec.config.epochs - 1;
      for (const auto& c : cells) {
        if (c.validation || c.cls != cls || c.regime != r || !c.ok()) continue;
        row.seeds.push_back(c.seed);
        if (sel != selected.end() && row.selected_epoch < c.history.size()) {
          row.f1s.push_back(c.history[row.selected_epoch]);
        } else {
          row.f1s.push_back(c.report->f1());
        }
      }
      if (row.f1s.empty()) continue;
      std::tie(row.mean, row.stdev) = mean_std(row.f1s);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Reports

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::invalid_argument("bad number '" + std::string(s) + "'");
  return v;
}

std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::invalid_argument("bad integer '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& values, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ';';
    out += fmt(values[i]);
  }
  return out;
}

constexpr std::string_view kResultsHeader = "class,regime,mean,std,selected_epoch,seeds,f1s";

}  // namespace

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kResultsHeader << '\n';
  for (const auto& r : rows) {
    out << r.cls << ',' << r.regime << ',' << format_double(r.mean) << ',' << format_double(r.stdev) << ','
        << r.selected_epoch << ',' << join(r.seeds, [](std::uint64_t v) { return std::to_string(v); }) << ','
        << join(r.f1s, [](double v) { return format_double(v); }) << '\n';
  }
}

std::vector<ResultRow> parse_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) throw ParseError("results.csv", 1, "unexpected header");
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 7) throw ParseError("results.csv", lineno, "expected 7 fields");
    try {
      ResultRow r;
      r.cls = std::string(f[0]);
      r.regime = std::string(f[1]);
      r.mean = parse_double(f[2]);
      r.stdev = parse_double(f[3]);
      r.selected_epoch = parse_u64(f[4]);
      for (auto s : split(f[5], ';')) r.seeds.push_back(parse_u64(s));
      for (auto s : split(f[6], ';')) r.f1s.push_back(parse_double(s));
      rows.push_back(std::move(r));
    } catch (const std::invalid_argument& e) {
      throw ParseError("results.csv", lineno, e.what());
    }
  }
  return rows;
}

void write_history_csv(std::ostream& out, const std::vector<CellResult>& cells) {
  out << "epoch,class,regime,seed,f1\n";
  for (const auto& c : cells) {
    for (std::size_t e = 0; e < c.history.size(); ++e) {
      out << e << ',' << c.cls << ',' << regime_name(c.regime) << ',' << c.seed << ',' << format_double(c.history[e])
          << '\n';
    }
  }
}

void write_results_table(std::ostream& out, const std::vector<ResultRow>& rows) {
  std::map<std::string, double> best;
  for (const auto& r : rows) {
    auto [it, fresh] = best.try_emplace(r.cls, r.mean);
    if (!fresh) it->second = std::max(it->second, r.mean);
  }
  std::size_t wc = 5, wr = 6;
  for (const auto& r : rows) {
    wc = std::max(wc, r.cls.size());
    wr = std::max(wr, r.regime.size());
  }
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %-*s  %8s  %8s  %5s  %s\n", static_cast<int>(wc), "class", static_cast<int>(wr),
                "regime", "mean F1", "std", "runs", "best");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %-*s  %8.4f  %8.4f  %5zu  %s\n", static_cast<int>(wc), r.cls.c_str(),
                  static_cast<int>(wr), r.regime.c_str(), r.mean, r.stdev, r.f1s.size(),
                  r.mean == best.at(r.cls) ? "*" : "");
    out << buf;
  }
}

void emit_reports(const ExperimentResult& result, const fs::path& outdir) {
  std::error_code ec;
  fs::create_directories(outdir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + outdir.string() + ": " + ec.message());
  auto open = [&](const char* name) {
    std::ofstream out(outdir / name);
    if (!out) throw std::runtime_error("cannot write " + (outdir / name).string());
    return out;
  };
  {
    auto out = open("results.csv");
    write_results_csv(out, result.rows);
  }
  {
    auto out = open("history.csv");
    write_history_csv(out, result.cells);
  }
  {
    auto out = open("results.txt");
    write_results_table(out, result.rows);
    for (const auto& c : result.cells) {
      if (!c.ok()) out << "failed: " << c.cls << ' ' << regime_name(c.regime) << " seed " << c.seed << ": " << c.error << '\n';
    }
  }
}

}  // namespace protoner
