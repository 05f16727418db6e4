#include "protoner/regimes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "protoner/adam.hpp"
#include "protoner/errors.hpp"

namespace protoner {

namespace {

constexpr std::array<std::string_view, 7> kRegimeNames = {"Base",     "BaseProto",     "Protonet",     "WarmBase",
                                                          "WarmProto", "WarmProto-CRF", "WarmProtoZero"};

// Independent streams for initialization, data sampling and dropout.
struct TrainingStreams {
  Rng init;
  Rng sample;
  Rng dropout;

  TrainingStreams(std::uint64_t seed, std::uint64_t salt)
      : init(Rng::mix(seed ^ (salt + 0x11))), sample(Rng::mix(seed ^ (salt + 0x22))), dropout(Rng::mix(seed ^ (salt + 0x33))) {}
};

constexpr std::uint64_t kStageSalt = 0x5eed0000;
constexpr std::uint64_t kWarmupSalt = 0xa11ce000;

std::vector<Parameter*> all_parameters(EncoderParams& enc, std::optional<CrfParams>& crf) {
  auto params = enc.parameters();
  if (crf) {
    for (Parameter* p : crf->parameters()) params.push_back(p);
  }
  return params;
}

void check_finite_loss(double loss, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
  }
}

// Minibatch RNN+CRF training shared by Base, WarmBase and the warm-up stage.
TrainedModel train_sequence_labeler(Regime regime, std::span<const LabeledSentence> corpus, const TagAlphabet& alphabet,
                                    std::size_t batch, std::size_t epochs, const EmbeddingTable& table,
                                    const RegimeConfig& cfg, const TrainingHooks& hooks, const EncoderParams* warm,
                                    std::uint64_t salt) {
  if (corpus.empty()) throw ContractError(std::string(regime_name(regime)) + ": empty training corpus");
  TrainingStreams rng(cfg.seed, salt);
  TrainedModel model;
  model.regime = regime;
  model.alphabet = alphabet;
  if (warm) {
    model.encoder = *warm;
    if (model.encoder.config.output_dim != alphabet.size() || model.encoder.outside_bias) {
      throw ContractError("warm encoder head does not match the label alphabet");
    }
  } else {
    model.encoder = init_params(cfg.encoder_config(table.dim(), alphabet.size(), false), rng.init);
  }
  model.crf = make_crf(alphabet);

  std::vector<std::vector<std::size_t>> gold;
  gold.reserve(corpus.size());
  for (const auto& s : corpus) gold.push_back(alphabet.encode(s.tags));

  Adam opt(all_parameters(model.encoder, model.crf), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.l2});
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<LabeledSentence> seen;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    rng.sample.shuffle(order);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch, ++steps) {
      const std::size_t end = std::min(order.size(), begin + batch);
      if (hooks.on_batch) {
        seen.clear();
        for (std::size_t i = begin; i < end; ++i) seen.push_back(corpus[order[i]]);
        hooks.on_batch(seen);
      }
      Tape tape(Mode::train);
      SentenceEncoder enc(tape, model.encoder, table);
      std::vector<const std::string*> words;
      for (std::size_t i = begin; i < end; ++i) {
        for (const auto& w : corpus[order[i]].tokens) words.push_back(&w);
      }
      enc.prepare(words);
      std::vector<Var> terms;
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t s = order[i];
        terms.push_back(crf_nll(enc.encode(corpus[s], rng.dropout), gold[s], *model.crf));
      }
      Var loss = ops::scale(ops::sum(ops::concat_rows(terms)), 1.0 / static_cast<double>(end - begin));
      check_finite_loss(loss.value().item(), epoch, steps);
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      loss_sum += loss.value().item();
    }
    EpochRecord rec{loss_sum / static_cast<double>(steps), std::nullopt};
    if (hooks.on_epoch) {
      TrainedModel snapshot = model;
      rec.f1 = hooks.on_epoch(epoch, snapshot);
    }
    model.history.push_back(rec);
  }
  return model;
}

// Subsamples oversized support and query sets; the query keeps its ratio of
// carrier to empty sentences.
void cap_episode(Episode& ep, const RegimeConfig& cfg, Rng& rng) {
  if (ep.support.size() > cfg.support_cap) {
    rng.shuffle(ep.support);
    ep.support.resize(cfg.support_cap);
  }
  if (ep.query.size() <= cfg.query_cap) return;
  Corpus with, without;
  for (auto& s : ep.query) (s.has_entity() ? with : without).push_back(std::move(s));
  const double total = static_cast<double>(with.size() + without.size());
  std::size_t keep_with = static_cast<std::size_t>(std::llround(cfg.query_cap * with.size() / total));
  keep_with = std::clamp<std::size_t>(keep_with, with.empty() ? 0 : 1, std::min(with.size(), cfg.query_cap));
  const std::size_t keep_without = std::min(without.size(), cfg.query_cap - keep_with);
  ep.query.clear();
  for (std::size_t i : rng.choose(with.size(), keep_with)) ep.query.push_back(std::move(with[i]));
  for (std::size_t i : rng.choose(without.size(), keep_without)) ep.query.push_back(std::move(without[i]));
}

Corpus carriers_of(std::span<const LabeledSentence> corpus) {
  Corpus out;
  for (const auto& s : corpus) {
    if (s.has_entity()) out.push_back(s);
  }
  return out;
}

}  // namespace

std::string_view regime_name(Regime r) { return kRegimeNames[static_cast<std::size_t>(r)]; }

Regime parse_regime(std::string_view name) {
  for (std::size_t i = 0; i < kRegimeNames.size(); ++i) {
    if (kRegimeNames[i] == name) return static_cast<Regime>(i);
  }
  throw ConfigError("unknown regime '" + std::string(name) + "'");
}

bool is_prototype_regime(Regime r) { return r != Regime::base && r != Regime::warm_base; }

bool is_warm_regime(Regime r) {
  return r == Regime::warm_base || r == Regime::warm_proto || r == Regime::warm_proto_crf ||
         r == Regime::warm_proto_zero;
}

void RegimeConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("regime config: " + what); };
  if (!(p_in_domain >= 0.0 && p_in_domain <= 1.0)) fail("p must lie in [0, 1]");
  if (n_support < 2) fail("N must be at least 2");
  if (epochs == 0 || proto_steps_per_epoch == 0 || batch_in_domain == 0 || batch_warmup == 0 ||
      support_cap == 0 || query_cap == 0 || proto_dim == 0 || char_embedding == 0 || char_hidden == 0 ||
      word_hidden == 0) {
    fail("all sizes must be positive");
  }
  if (!(lr > 0.0)) fail("learning rate must be positive");
  if (!(l2 >= 0.0)) fail("l2 must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
}

std::string RegimeConfig::fingerprint(std::size_t word_dim) const {
  std::ostringstream s;
  s << "regime=" << regime_name(regime) << ";word_dim=" << word_dim << ";char_embedding=" << char_embedding
    << ";char_hidden=" << char_hidden << ";word_hidden=" << word_hidden << ";proto_dim=" << proto_dim;
  return s.str();
}

EncoderConfig RegimeConfig::encoder_config(std::size_t word_dim, std::size_t output_dim, bool outside_bias) const {
  EncoderConfig e;
  e.word_dim = word_dim;
  e.char_embedding = char_embedding;
  e.char_hidden = char_hidden;
  e.word_hidden = word_hidden;
  e.output_dim = output_dim;
  e.dropout = dropout;
  e.outside_bias = outside_bias;
  e.outside_bias_init = outside_bias_init;
  return e;
}

Scheme TrainedModel::scheme() const {
  return alphabet.tag(0).starts_with("B-") || alphabet.tag(0).starts_with("I-") ? Scheme::bio : Scheme::to;
}

std::vector<std::string> TrainedModel::predict(std::span<const std::string> tokens, const EmbeddingTable& table) {
  if (prototypes) {
    return predict_tags(tokens, encoder, table, *prototypes, alphabet, crf ? &*crf : nullptr);
  }
  if (!crf) throw ContractError("model has neither prototypes nor a CRF");
  const Tensor logits = encode_eval(tokens, encoder, table);
  std::vector<std::string> out;
  for (std::size_t k : viterbi(logits, *crf).tags) out.push_back(alphabet.tag(k));
  return out;
}

std::vector<std::vector<std::string>> TrainedModel::predict(std::span<const LabeledSentence> corpus,
                                                            const EmbeddingTable& table) {
  std::vector<std::vector<std::string>> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(predict(s.tokens, table));
  return out;
}

TrainedModel train_base(const TrainingData& data, const EmbeddingTable& table, const RegimeConfig& cfg,
                        const TrainingHooks& hooks, const EncoderParams* warm) {
  cfg.validate();
  if (data.in_domain.empty()) throw ContractError("Base: in-domain training set is empty");
  const TagAlphabet alphabet = TagAlphabet::for_class(data.target_class, data.scheme);
  const Regime regime = warm ? Regime::warm_base : Regime::base;
  return train_sequence_labeler(regime, data.in_domain, alphabet, cfg.batch_in_domain, cfg.epochs, table, cfg, hooks,
                                warm, kStageSalt);
}

TrainedModel pretrain_out_of_domain(const TrainingData& data, const EmbeddingTable& table, const RegimeConfig& cfg,
                                    const TrainingHooks& hooks) {
  cfg.validate();
  const auto classes = classes_in(data.out_of_domain);
  if (std::find(classes.begin(), classes.end(), data.target_class) != classes.end()) {
    throw ContractError("out-of-domain data still mentions the target class " + data.target_class);
  }
  if (classes.empty()) throw ContractError("out-of-domain data has no entity classes");
  const TagAlphabet alphabet = TagAlphabet::for_classes(classes, data.scheme);
  return train_sequence_labeler(Regime::base, data.out_of_domain, alphabet, cfg.batch_warmup, cfg.warmup_epochs,
                                table, cfg, hooks, nullptr, kWarmupSalt);
}

EncoderParams warm_start(const TrainedModel& pretrained, std::size_t output_dim, bool outside_bias,
                         double outside_bias_init, Rng& rng) {
  EncoderParams out = pretrained.encoder;
  reset_head(out, output_dim, outside_bias, outside_bias_init, rng);
  return out;
}

TrainedModel train_proto(const TrainingData& data, const EmbeddingTable& table, const RegimeConfig& cfg_in,
                         const EncoderParams* warm, bool use_crf, bool zero_shot, const TrainingHooks& hooks) {
  RegimeConfig cfg = cfg_in;
  if (zero_shot) cfg.p_in_domain = 0.0;
  cfg.validate();
  TrainingStreams rng(cfg.seed, kStageSalt);
  const TagAlphabet alphabet = TagAlphabet::for_class(data.target_class, data.scheme);
  const std::span<const LabeledSentence> in_domain = zero_shot ? std::span<const LabeledSentence>{} : data.in_domain;

  TrainedModel model;
  model.regime = cfg.regime;
  model.alphabet = alphabet;
  if (warm) {
    model.encoder = *warm;
    if (model.encoder.config.output_dim != cfg.proto_dim || !model.encoder.outside_bias) {
      throw ContractError("warm encoder head does not match the prototype space");
    }
  } else {
    model.encoder = init_params(cfg.encoder_config(table.dim(), cfg.proto_dim, true), rng.init);
  }
  if (use_crf) model.crf = make_crf(alphabet);

  const OutOfDomainSampler ood(data.out_of_domain, data.scheme);
  const bool ood_possible = !ood.eligible(cfg.n_support).empty();
  Adam opt(all_parameters(model.encoder, model.crf), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.l2});
  std::vector<LabeledSentence> seen;
  std::size_t fallbacks = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t step = 0; step < cfg.proto_steps_per_epoch; ++step) {
      bool from_in_domain = rng.sample.uniform() < cfg.p_in_domain;
      if (!from_in_domain && !ood_possible) {
        if (zero_shot) {
          throw EpisodeError("zero-shot training needs out-of-domain episodes, but no class has " +
                             std::to_string(cfg.n_support) + " carrier sentences");
        }
        if (fallbacks++ == 0) {
          spdlog::warn("{}: no out-of-domain class with {} carriers; using in-domain episodes instead",
                       regime_name(cfg.regime), cfg.n_support);
        }
        from_in_domain = true;
      }
      Episode ep;
      TagAlphabet episode_alphabet = alphabet;
      if (from_in_domain) {
        ep = split_episode(in_domain, rng.sample);
      } else {
        ep = ood.sample(cfg.n_support, rng.sample);
        episode_alphabet = TagAlphabet::for_class(ood.last_class(), data.scheme);
      }
      cap_episode(ep, cfg, rng.sample);
      if (hooks.on_episode) hooks.on_episode(from_in_domain);
      if (hooks.on_batch) {
        seen = ep.support;
        seen.insert(seen.end(), ep.query.begin(), ep.query.end());
        hooks.on_batch(seen);
      }

      Tape tape(Mode::train);
      const QueryLogits q = episode_logits(tape, ep, model.encoder, table, episode_alphabet, rng.dropout);
      Var loss;
      if (use_crf) {
        // The CRF scores tag roles (B, I, O), so it is shared across episode classes.
        std::vector<Var> terms;
        for (std::size_t i = 0; i < q.logits.size(); ++i) terms.push_back(crf_nll(q.logits[i], q.gold[i], *model.crf));
        loss = ops::scale(ops::sum(ops::concat_rows(terms)), 1.0 / static_cast<double>(q.tokens));
      } else {
        loss = cross_entropy(q);
      }
      check_finite_loss(loss.value().item(), epoch, step);
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      loss_sum += loss.value().item();
    }
    EpochRecord rec{loss_sum / static_cast<double>(cfg.proto_steps_per_epoch), std::nullopt};
    if (hooks.on_epoch) {
      TrainedModel snapshot = model;
      snapshot.prototypes = freeze_prototypes(carriers_of(data.in_domain), snapshot.encoder, table, alphabet);
      rec.f1 = hooks.on_epoch(epoch, snapshot);
    }
    model.history.push_back(rec);
  }
  if (fallbacks > 0) spdlog::info("{}: {} out-of-domain steps fell back to in-domain", regime_name(cfg.regime), fallbacks);
  model.prototypes = freeze_prototypes(carriers_of(data.in_domain), model.encoder, table, alphabet);
  return model;
}

TrainedModel train_warmbase(const TrainingData& data, const EmbeddingTable& table, const RegimeConfig& cfg,
                            const TrainingHooks& hooks, const TrainedModel* pretrained) {
  std::optional<TrainedModel> own;
  if (!pretrained) {
    own = pretrain_out_of_domain(data, table, cfg);
    pretrained = &*own;
  }
  TrainingStreams rng(cfg.seed, kStageSalt);
  const TagAlphabet alphabet = TagAlphabet::for_class(data.target_class, data.scheme);
  const EncoderParams warm = warm_start(*pretrained, alphabet.size(), false, cfg.outside_bias_init, rng.init);
  return train_base(data, table, cfg, hooks, &warm);
}

TrainedModel train_regime(const TrainingData& data, const EmbeddingTable& table, const RegimeConfig& cfg,
                          const TrainingHooks& hooks, const TrainedModel* pretrained) {
  std::optional<TrainedModel> own;
  auto ensure_pretrained = [&]() -> const TrainedModel& {
    if (pretrained) return *pretrained;
    own = pretrain_out_of_domain(data, table, cfg);
    return *own;
  };
  auto warm_proto_params = [&]() {
    const TrainedModel& pre = ensure_pretrained();
    TrainingStreams rng(cfg.seed, kStageSalt);
    return warm_start(pre, cfg.proto_dim, true, cfg.outside_bias_init, rng.init);
  };
  TrainedModel out;
  switch (cfg.regime) {
    case Regime::base:
      out = train_base(data, table, cfg, hooks);
      break;
    case Regime::base_proto: {
      RegimeConfig c = cfg;
      c.p_in_domain = 1.0;
      out = train_proto(data, table, c, nullptr, false, false, hooks);
      break;
    }
    case Regime::protonet:
      out = train_proto(data, table, cfg, nullptr, false, false, hooks);
      break;
    case Regime::warm_base:
      out = train_warmbase(data, table, cfg, hooks, &ensure_pretrained());
      break;
    case Regime::warm_proto: {
      const EncoderParams warm = warm_proto_params();
      out = train_proto(data, table, cfg, &warm, false, false, hooks);
      break;
    }
    case Regime::warm_proto_crf: {
      const EncoderParams warm = warm_proto_params();
      out = train_proto(data, table, cfg, &warm, true, false, hooks);
      break;
    }
    case Regime::warm_proto_zero: {
      const EncoderParams warm = warm_proto_params();
      out = train_proto(data, table, cfg, &warm, false, true, hooks);
      break;
    }
  }
  out.regime = cfg.regime;
  return out;
}

std::size_t select_epoch(std::span<const std::vector<double>> histories) {
  if (histories.empty() || histories[0].empty()) throw ContractError("select_epoch: no histories");
  const std::size_t epochs = histories[0].size();
  for (const auto& h : histories) {
    if (h.size() != epochs) throw ContractError("select_epoch: histories differ in epoch count");
  }
  std::size_t best = 0;
  double best_mean = -std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < epochs; ++e) {
    double s = 0.0;
    for (const auto& h : histories) s += h[e];
    const double m = s / static_cast<double>(histories.size());
    if (m > best_mean) {
      best_mean = m;
      best = e;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

using nlohmann::json;

constexpr const char* kCheckpointFormat = "protoner-checkpoint";
constexpr int kCheckpointVersion = 1;

json tensor_json(const Tensor& t) { return json{{"shape", {t.rows(), t.cols()}}, {"data", t.vector()}}; }

Tensor tensor_from(const json& j) {
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 2) throw ConfigError("checkpoint: tensor shape must have two entries");
  return Tensor(shape[0], shape[1], j.at("data").get<std::vector<double>>());
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainedModel& model, const RegimeConfig& cfg) {
  json tensors = json::object();
  for (const Parameter* p : model.encoder.parameters()) tensors[p->name] = tensor_json(p->value);
  if (model.crf) {
    for (Parameter* p : const_cast<CrfParams&>(*model.crf).parameters()) tensors[p->name] = tensor_json(p->value);
  }
  json j{{"format", kCheckpointFormat},
         {"version", kCheckpointVersion},
         {"fingerprint", cfg.fingerprint(model.encoder.config.word_dim)},
         {"regime", regime_name(model.regime)},
         {"alphabet", model.alphabet.tags()},
         {"output_dim", model.encoder.config.output_dim},
         {"outside_bias", model.encoder.outside_bias.has_value()},
         {"has_crf", model.crf.has_value()},
         {"tensors", tensors}};
  if (model.prototypes) {
    j["prototypes"] = json{{"tags", model.prototypes->tags}, {"centers", tensor_json(model.prototypes->centers)}};
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << j.dump() << '\n';
}

TrainedModel load_checkpoint(const std::string& path, const RegimeConfig& cfg, std::size_t word_dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat || j.value("version", 0) != kCheckpointVersion) {
    throw ConfigError("checkpoint " + path + ": unsupported format or version");
  }
  const std::string expected = cfg.fingerprint(word_dim);
  if (j.at("fingerprint").get<std::string>() != expected) {
    throw ConfigError("checkpoint " + path + ": fingerprint mismatch (file '" + j.at("fingerprint").get<std::string>() +
                      "', expected '" + expected + "')");
  }
  TrainedModel model;
  model.regime = parse_regime(j.at("regime").get<std::string>());
  model.alphabet = TagAlphabet(j.at("alphabet").get<std::vector<std::string>>());
  Rng scratch(0);
  model.encoder = init_params(
      cfg.encoder_config(word_dim, j.at("output_dim").get<std::size_t>(), j.at("outside_bias").get<bool>()), scratch);
  if (j.at("has_crf").get<bool>()) model.crf = make_crf(model.alphabet);
  const json& tensors = j.at("tensors");
  auto restore = [&](Parameter* p) {
    if (!tensors.contains(p->name)) throw ConfigError("checkpoint: missing tensor " + p->name);
    Tensor t = tensor_from(tensors.at(p->name));
    if (t.shape() != p->value.shape()) throw ConfigError("checkpoint: shape mismatch for " + p->name);
    p->value = std::move(t);
    p->grad = Tensor(p->value.shape());
  };
  for (Parameter* p : model.encoder.parameters()) restore(p);
  if (model.crf) {
    for (Parameter* p : model.crf->parameters()) restore(p);
  }
  if (j.contains("prototypes")) {
    PrototypeSet ps;
    ps.tags = j.at("prototypes").at("tags").get<std::vector<std::string>>();
    ps.centers = tensor_from(j.at("prototypes").at("centers"));
    model.prototypes = std::move(ps);
  }
  return model;
}

}  // namespace protoner
