#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "protoner/autodiff.hpp"
#include "protoner/corpus.hpp"
#include "protoner/embeddings.hpp"

namespace protoner {

struct EncoderConfig {
  std::size_t word_dim = 0;  // taken from the embedding table
  std::size_t char_vocab = 256;  // byte-level characters
  std::size_t char_embedding = 16;
  std::size_t char_hidden = 16;   // per direction
  std::size_t word_hidden = 64;   // per direction
  std::size_t output_dim = 64;    // M for prototypes, label count for the baseline head
  double dropout = 0.5;
  bool outside_bias = true;       // b_O, prototype head only
  double outside_bias_init = -4.0;
};

struct LstmWeights {
  Parameter wx;    // D x 4H
  Parameter wh;    // H x 4H
  Parameter bias;  // 1 x 4H, forget block initialized to 1
};

/// Trainable weights of the char-RNN, the word bi-LSTM, the output
/// projection and (for the prototype head) the O-class logit b_O.
struct EncoderParams {
  EncoderConfig config;
  Parameter char_embedding;
  LstmWeights char_fwd;
  LstmWeights char_bwd;
  LstmWeights word_fwd;
  LstmWeights word_bwd;
  Parameter proj_w;
  Parameter proj_b;
  std::optional<Parameter> outside_bias;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  /// Parameters shared with a pretrained model on warm start (everything but
  /// the projection and b_O).
  std::vector<Parameter*> transferable();
};

/// a = sqrt(6 / (fan_in + fan_out)).
double glorot_bound(std::size_t fan_in, std::size_t fan_out);

EncoderParams init_params(const EncoderConfig& cfg, Rng& rng);
/// Fresh projection (and b_O when cfg asks for it) over existing weights.
void reset_head(EncoderParams& params, std::size_t output_dim, bool outside_bias, double outside_bias_init,
                Rng& rng);

/// Bytes of a token as char-vocabulary indices.
std::vector<std::size_t> char_indices(std::string_view token);

/// Builds encoder graphs on one tape. Character features of repeated words
/// are computed once per tape; prepare() computes them for many sentences in
/// a single batched pass.
class SentenceEncoder {
 public:
  SentenceEncoder(Tape& tape, EncoderParams& params, const EmbeddingTable& table);

  /// One output row per token. Dropout on the bi-LSTM output is active only
  /// when the tape is in train mode. Throws ContractError for an empty sentence.
  Var encode(std::span<const std::string> tokens, Rng& dropout_rng);
  Var encode(const LabeledSentence& sentence, Rng& dropout_rng) { return encode(sentence.tokens, dropout_rng); }

  /// Character features for every word of the sentences not yet seen.
  void prepare(std::span<const LabeledSentence> sentences);
  void prepare(std::span<const std::string> tokens);
  void prepare(const std::vector<const std::string*>& words);

  Tape& tape() { return tape_; }

 private:
  struct CharSlot {
    std::size_t block = 0;
    std::size_t row = 0;
  };

  Var char_rows(std::span<const std::string> tokens);

  Tape& tape_;
  EncoderParams& params_;
  const EmbeddingTable& table_;
  std::vector<Var> blocks_;
  std::unordered_map<std::string, CharSlot> char_cache_;
};

/// Eval-mode encoding as a plain tensor.
Tensor encode_eval(std::span<const std::string> tokens, EncoderParams& params, const EmbeddingTable& table);

}  // namespace protoner
