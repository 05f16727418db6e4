#pragma once

#include <string>
#include <vector>

#include "protoner/corpus.hpp"
#include "protoner/experiment.hpp"
#include "protoner/regimes.hpp"
#include "protoner/synthetic.hpp"

namespace protoner::testing {

/// Three small classes over a short background vocabulary; fast enough for
/// full training loops in unit tests.
inline SyntheticSpec tiny_spec(std::uint64_t seed = 3) {
  SyntheticSpec spec;
  spec.classes = {
      {"PER", {"anna", "boris", "carla", "dmitri", "elena ivanova", "fedor"}, 0.4, {"mr"}, 0.3},
      {"LOC", {"paris", "rome", "new york", "oslo", "lima"}, 0.35, {"in"}, 0.3},
      {"ORG", {"acme corp", "globex", "initech", "umbrella inc"}, 0.3, {}, 0.0},
  };
  spec.background = {"the", "a", "of", "went", "to", "said", "and", "we", "saw", "it", "on", "day"};
  spec.train_sentences = 160;
  spec.validation_sentences = 120;
  spec.min_length = 3;
  spec.max_length = 6;
  spec.seed = seed;
  spec.embedding.dim = 6;
  return spec;
}

/// Architecture and schedule small enough for millisecond steps.
inline RegimeConfig tiny_config() {
  RegimeConfig cfg;
  cfg.n_support = 4;
  cfg.epochs = 2;
  cfg.proto_steps_per_epoch = 3;
  cfg.warmup_epochs = 1;
  cfg.batch_in_domain = 4;
  cfg.batch_warmup = 16;
  cfg.char_embedding = 3;
  cfg.char_hidden = 2;
  cfg.word_hidden = 4;
  cfg.proto_dim = 5;
  cfg.seed = 11;
  return cfg;
}

struct TinyWorld {
  ExperimentData data;
  TaskPool pool;
  TaskDataset task;
};

inline TinyWorld tiny_world(const std::string& cls = "LOC", std::size_t n = 4, std::uint64_t task_seed = 5,
                            Scheme scheme = Scheme::bio) {
  TinyWorld w{generate_synthetic_data(tiny_spec()), {}, {}};
  w.pool = make_task(w.data.train, w.data.validation, cls, scheme);
  Rng rng(task_seed);
  w.task = draw_task(w.pool, n, rng);
  return w;
}

inline LabeledSentence sentence(std::vector<std::string> tokens, std::vector<std::string> tags,
                                Scheme scheme = Scheme::bio) {
  return LabeledSentence{std::move(tokens), std::move(tags), scheme};
}

/// Every trainable tensor of a model, in a fixed order.
inline std::vector<Tensor> weights_of(const TrainedModel& m) {
  std::vector<Tensor> out;
  for (const Parameter* p : m.encoder.parameters()) out.push_back(p->value);
  if (m.crf) {
    auto& crf = const_cast<CrfParams&>(*m.crf);
    for (const Parameter* p : crf.parameters()) out.push_back(p->value);
  }
  return out;
}

}  // namespace protoner::testing
