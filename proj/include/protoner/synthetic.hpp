#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "protoner/corpus.hpp"
#include "protoner/embeddings.hpp"
#include "protoner/rng.hpp"

namespace protoner {

struct SyntheticClass {
  std::string name;
  // Entity surface forms; whitespace separates the tokens of multi-word entities.
  std::vector<std::string> lexicon;
  double carrier_probability = 0.3;
  // Context words placed right before an entity with cue_probability.
  std::vector<std::string> cues;
  double cue_probability = 0.0;
};

struct SyntheticEmbeddingSpec {
  std::size_t dim = 24;
  // Distance scale of class centers from the origin.
  double class_spread = 1.0;
  // Per-word deviation from the class center; background words are pure noise.
  double noise = 1.0;
};

struct SyntheticSpec {
  std::vector<SyntheticClass> classes;
  std::vector<std::string> background;
  std::size_t train_sentences = 3000;
  std::size_t validation_sentences = 800;
  std::size_t min_length = 6;  // background tokens per sentence
  std::size_t max_length = 14;
  // Probability that a carrier holds a second entity of the same class.
  double repeat_probability = 0.1;
  bool capitalize_first = true;
  std::uint64_t seed = 1;
  SyntheticEmbeddingSpec embedding;
};

/// Parses and validates a spec; unknown keys and empty lexicons are ConfigErrors.
SyntheticSpec parse_synthetic_spec(const nlohmann::json& j);
SyntheticSpec load_synthetic_spec(const std::string& path);

struct SyntheticCorpus {
  Corpus train;
  Corpus validation;
};

/// BIO-tagged sentences: background words with entities of each class
/// inserted independently with the class's carrier probability.
SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec, Rng& rng);

/// Stand-in for pretrained vectors: lexicon words sit around a per-class
/// center, every other word is noise. Keys are lowercase.
EmbeddingTable synthesize_embeddings(const SyntheticSpec& spec, Rng& rng);

}  // namespace protoner
