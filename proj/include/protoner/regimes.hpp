#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protoner/corpus.hpp"
#include "protoner/crf.hpp"
#include "protoner/embeddings.hpp"
#include "protoner/encoder.hpp"
#include "protoner/protohead.hpp"

namespace protoner {

enum class Regime { base, base_proto, protonet, warm_base, warm_proto, warm_proto_crf, warm_proto_zero };

inline constexpr std::array<Regime, 7> kAllRegimes = {Regime::base,       Regime::base_proto,     Regime::protonet,
                                                      Regime::warm_base,  Regime::warm_proto,     Regime::warm_proto_crf,
                                                      Regime::warm_proto_zero};

std::string_view regime_name(Regime r);
/// Accepts the display names (Base, WarmProto-CRF, ...). Throws ConfigError.
Regime parse_regime(std::string_view name);
bool is_prototype_regime(Regime r);
bool is_warm_regime(Regime r);

struct RegimeConfig {
  Regime regime = Regime::base;
  std::size_t n_support = 20;          // carriers of the target class in the in-domain sample
  double p_in_domain = 0.5;            // Protonet scenario mixing
  std::size_t epochs = 60;
  std::size_t proto_steps_per_epoch = 50;
  std::size_t warmup_epochs = 5;       // out-of-domain Base pretraining
  std::size_t batch_in_domain = 10;
  std::size_t batch_warmup = 32;
  std::size_t support_cap = 40;
  std::size_t query_cap = 60;
  double lr = 3e-3;
  double l2 = 0.1;
  double dropout = 0.5;
  std::size_t proto_dim = 64;          // M
  double outside_bias_init = -4.0;     // b_O
  std::size_t char_embedding = 16;
  std::size_t char_hidden = 16;
  std::size_t word_hidden = 64;
  std::uint64_t seed = 1;

  /// Throws ConfigError for out-of-range values.
  void validate() const;
  /// Architecture-relevant settings as a canonical string.
  std::string fingerprint(std::size_t word_dim) const;
  EncoderConfig encoder_config(std::size_t word_dim, std::size_t output_dim, bool outside_bias) const;
};

struct EpochRecord {
  double loss = 0.0;
  std::optional<double> f1;
};

struct TrainedModel {
  Regime regime = Regime::base;
  TagAlphabet alphabet;
  EncoderParams encoder;
  std::optional<CrfParams> crf;             // CRF decoding regimes
  std::optional<PrototypeSet> prototypes;   // prototype regimes
  std::vector<EpochRecord> history;

  std::vector<std::string> predict(std::span<const std::string> tokens, const EmbeddingTable& table);
  std::vector<std::vector<std::string>> predict(std::span<const LabeledSentence> corpus, const EmbeddingTable& table);
  /// Scheme of the predicted tags.
  Scheme scheme() const;
};

struct TrainingHooks {
  // Every group of sentences that feeds one parameter update.
  std::function<void(std::span<const LabeledSentence>)> on_batch;
  // Scenario chosen for each prototype step (true = in-domain).
  std::function<void(bool in_domain)> on_episode;
  // After every epoch; the returned score is stored in the history.
  std::function<std::optional<double>(std::size_t epoch, TrainedModel& snapshot)> on_epoch;
};

/// RNN + CRF on in-domain minibatches. With `warm`, the encoder (with its
/// fresh head) starts from those weights.
TrainedModel train_base(const TrainingData& data, const EmbeddingTable& table, const RegimeConfig& cfg,
                        const TrainingHooks& hooks = {}, const EncoderParams* warm = nullptr);

/// Base on the out-of-domain data over its full alphabet (warm-up stage).
TrainedModel pretrain_out_of_domain(const TrainingData& data, const EmbeddingTable& table, const RegimeConfig& cfg,
                                    const TrainingHooks& hooks = {});

/// Copies of the embedding and LSTM weights of a pretrained model with a
/// freshly initialized projection (and b_O when requested). The CRF is not carried.
EncoderParams warm_start(const TrainedModel& pretrained, std::size_t output_dim, bool outside_bias,
                         double outside_bias_init, Rng& rng);

/// Prototypical training. Each step uses an in-domain episode with
/// probability p and an out-of-domain episode otherwise. zero_shot forces
/// p = 0 and keeps in-domain sentences out of training entirely; they only
/// provide the final prototypes.
TrainedModel train_proto(const TrainingData& data, const EmbeddingTable& table, const RegimeConfig& cfg,
                         const EncoderParams* warm, bool use_crf, bool zero_shot, const TrainingHooks& hooks = {});

TrainedModel train_warmbase(const TrainingData& data, const EmbeddingTable& table, const RegimeConfig& cfg,
                            const TrainingHooks& hooks = {}, const TrainedModel* pretrained = nullptr);

/// Dispatches cfg.regime. Warm regimes pretrain unless `pretrained` is given.
TrainedModel train_regime(const TrainingData& data, const EmbeddingTable& table, const RegimeConfig& cfg,
                          const TrainingHooks& hooks = {}, const TrainedModel* pretrained = nullptr);

/// Argmax over epochs of the mean score across validation tasks; ties go
/// to the earliest epoch. Throws ContractError for empty or ragged input.
std::size_t select_epoch(std::span<const std::vector<double>> histories);

/// Versioned JSON container of named tensors plus the config fingerprint.
void save_checkpoint(const std::string& path, const TrainedModel& model, const RegimeConfig& cfg);
/// Throws ConfigError when the stored fingerprint differs from cfg's.
TrainedModel load_checkpoint(const std::string& path, const RegimeConfig& cfg, std::size_t word_dim);

}  // namespace protoner
