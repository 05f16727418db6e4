#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protoner/autodiff.hpp"
#include "protoner/corpus.hpp"
#include "protoner/crf.hpp"
#include "protoner/embeddings.hpp"
#include "protoner/encoder.hpp"

namespace protoner {

/// Logit for an alphabet tag with no support instance.
inline constexpr double kMissingPrototypeLogit = -1e4;

/// Frozen class centers: the mean encoding of support tokens per tag.
struct PrototypeSet {
  std::vector<std::string> tags;  // entity tags with a prototype, alphabet order
  Tensor centers;                 // tags.size() x M

  std::size_t dim() const { return centers.cols(); }
  std::optional<std::size_t> find(std::string_view tag) const;
};

/// Probabilities over alphabet order (entity tags, then O).
struct TokenDistribution {
  std::vector<std::string> tags;
  std::vector<double> probabilities;
};

struct SupportEncoding {
  Var rows;  // T x M
  std::span<const std::string> tags;
};

struct PrototypeVars {
  std::vector<std::string> tags;
  Var centers;
};

/// Differentiable prototypes; gradients flow back into the support encodings.
/// Throws EmptySupportError when no support token carries an alphabet entity tag.
PrototypeVars build_prototypes(std::span<const SupportEncoding> support, const TagAlphabet& alphabet);

struct SupportTensor {
  Tensor rows;
  std::vector<std::string> tags;
};
PrototypeSet build_prototypes(std::span<const SupportTensor> support, const TagAlphabet& alphabet);

/// Row-wise logits in alphabet order: -|row - c_k|^2 for entity tags,
/// kMissingPrototypeLogit for tags without a prototype, b_O for O.
Var token_logits(Var rows, const PrototypeVars& protos, Var outside_bias, const TagAlphabet& alphabet);
std::vector<double> token_logits(std::span<const double> row, const PrototypeSet& protos, double outside_bias,
                                 const TagAlphabet& alphabet);
TokenDistribution token_distribution(std::span<const double> row, const PrototypeSet& protos, double outside_bias,
                                     const TagAlphabet& alphabet);

/// Encodes support and query on one tape and returns the query logits per
/// sentence, ready for cross-entropy or a CRF.
struct QueryLogits {
  std::vector<Var> logits;                      // per query sentence, T x K
  std::vector<std::vector<std::size_t>> gold;  // alphabet indices
  std::size_t tokens = 0;
};
QueryLogits episode_logits(Tape& tape, const Episode& episode, EncoderParams& params, const EmbeddingTable& table,
                           const TagAlphabet& alphabet, Rng& dropout_rng);

/// Mean token cross-entropy of the query under prototypes built from the support.
Var episode_loss(Tape& tape, const Episode& episode, EncoderParams& params, const EmbeddingTable& table,
                 const TagAlphabet& alphabet, Rng& dropout_rng);

/// Mean token cross-entropy for precomputed query logits.
Var cross_entropy(const QueryLogits& q);

/// Eval-mode prototypes from every sentence of `support`.
PrototypeSet freeze_prototypes(std::span<const LabeledSentence> support, EncoderParams& params,
                               const EmbeddingTable& table, const TagAlphabet& alphabet);

/// Logit rows (T x K) for a sentence against frozen prototypes.
Tensor prototype_logits(std::span<const std::string> tokens, EncoderParams& params, const EmbeddingTable& table,
                        const PrototypeSet& protos, const TagAlphabet& alphabet);

/// Nearest-prototype tagging; with a CRF, Viterbi over the logit rows.
std::vector<std::string> predict_tags(std::span<const std::string> tokens, EncoderParams& params,
                                      const EmbeddingTable& table, const PrototypeSet& protos,
                                      const TagAlphabet& alphabet, const CrfParams* crf = nullptr);

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace protoner
