#include "protoner/encoder.hpp"

#include <cmath>

namespace protoner {

namespace {

Tensor uniform_tensor(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Tensor t(rows, cols);
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

LstmWeights init_lstm(const std::string& name, std::size_t input, std::size_t hidden, Rng& rng) {
  LstmWeights w;
  w.wx = Parameter(name + ".wx", uniform_tensor(input, 4 * hidden, glorot_bound(input, 4 * hidden), rng));
  w.wh = Parameter(name + ".wh", uniform_tensor(hidden, 4 * hidden, glorot_bound(hidden, 4 * hidden), rng));
  Tensor bias(1, 4 * hidden);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) bias[j] = 1.0;
  w.bias = Parameter(name + ".bias", std::move(bias));
  return w;
}

void append(std::vector<Parameter*>& out, LstmWeights& w) {
  out.insert(out.end(), {&w.wx, &w.wh, &w.bias});
}

}  // namespace

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

std::vector<Parameter*> EncoderParams::transferable() {
  std::vector<Parameter*> out{&char_embedding};
  append(out, char_fwd);
  append(out, char_bwd);
  append(out, word_fwd);
  append(out, word_bwd);
  return out;
}

std::vector<Parameter*> EncoderParams::parameters() {
  std::vector<Parameter*> out = transferable();
  out.push_back(&proj_w);
  out.push_back(&proj_b);
  if (outside_bias) out.push_back(&*outside_bias);
  return out;
}

std::vector<const Parameter*> EncoderParams::parameters() const {
  auto mut = const_cast<EncoderParams*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

EncoderParams init_params(const EncoderConfig& cfg, Rng& rng) {
  if (cfg.word_dim == 0 || cfg.char_vocab == 0 || cfg.char_embedding == 0 || cfg.char_hidden == 0 ||
      cfg.word_hidden == 0 || cfg.output_dim == 0) {
    throw ContractError("encoder dimensions must be positive");
  }
  EncoderParams p;
  p.config = cfg;
  p.char_embedding = Parameter(
      "char_embedding", uniform_tensor(cfg.char_vocab, cfg.char_embedding,
                                       glorot_bound(cfg.char_vocab, cfg.char_embedding), rng));
  p.char_fwd = init_lstm("char_lstm.fwd", cfg.char_embedding, cfg.char_hidden, rng);
  p.char_bwd = init_lstm("char_lstm.bwd", cfg.char_embedding, cfg.char_hidden, rng);
  const std::size_t word_input = cfg.word_dim + 2 * cfg.char_hidden;
  p.word_fwd = init_lstm("word_lstm.fwd", word_input, cfg.word_hidden, rng);
  p.word_bwd = init_lstm("word_lstm.bwd", word_input, cfg.word_hidden, rng);
  reset_head(p, cfg.output_dim, cfg.outside_bias, cfg.outside_bias_init, rng);
  return p;
}

void reset_head(EncoderParams& p, std::size_t output_dim, bool outside_bias, double outside_bias_init, Rng& rng) {
  const std::size_t in = 2 * p.config.word_hidden;
  p.config.output_dim = output_dim;
  p.config.outside_bias = outside_bias;
  p.config.outside_bias_init = outside_bias_init;
  p.proj_w = Parameter("projection.w", uniform_tensor(in, output_dim, glorot_bound(in, output_dim), rng));
  p.proj_b = Parameter("projection.b", Tensor(1, output_dim));
  if (outside_bias) {
    p.outside_bias = Parameter("outside_bias", Tensor::scalar(outside_bias_init));
  } else {
    p.outside_bias.reset();
  }
}

std::vector<std::size_t> char_indices(std::string_view token) {
  std::vector<std::size_t> out;
  out.reserve(token.size());
  for (unsigned char c : token) out.push_back(c);
  return out;
}

SentenceEncoder::SentenceEncoder(Tape& tape, EncoderParams& params, const EmbeddingTable& table)
    : tape_(tape), params_(params), table_(table) {
  if (table.dim() != params.config.word_dim) {
    throw DimensionError("embedding table dimension " + std::to_string(table.dim()) +
                         " does not match encoder word_dim " + std::to_string(params.config.word_dim));
  }
}

void SentenceEncoder::prepare(const std::vector<const std::string*>& words) {
  std::vector<std::vector<std::size_t>> seqs;
  std::vector<const std::string*> fresh;
  for (const std::string* w : words) {
    if (w->empty()) throw ContractError("cannot encode an empty token");
    if (char_cache_.contains(*w)) continue;
    char_cache_.emplace(*w, CharSlot{blocks_.size(), fresh.size()});
    fresh.push_back(w);
    seqs.push_back(char_indices(*w));
  }
  if (fresh.empty()) return;
  Var table = tape_.param(params_.char_embedding);
  auto run = [&](LstmWeights& w, bool reverse) {
    return ops::lstm_final_batch(table, seqs, tape_.param(w.wx), tape_.param(w.wh), tape_.param(w.bias), reverse);
  };
  // Forward state after the last character, backward state after the first.
  const Var parts[] = {run(params_.char_fwd, false), run(params_.char_bwd, true)};
  blocks_.push_back(ops::concat_cols(parts));
}

void SentenceEncoder::prepare(std::span<const std::string> tokens) {
  std::vector<const std::string*> words;
  for (const auto& t : tokens) words.push_back(&t);
  prepare(words);
}

void SentenceEncoder::prepare(std::span<const LabeledSentence> sentences) {
  std::vector<const std::string*> words;
  for (const auto& s : sentences) {
    for (const auto& t : s.tokens) words.push_back(&t);
  }
  prepare(words);
}

Var SentenceEncoder::char_rows(std::span<const std::string> tokens) {
  prepare(tokens);
  std::vector<std::vector<std::size_t>> rows(blocks_.size());
  std::vector<std::vector<std::size_t>> positions(blocks_.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const CharSlot slot = char_cache_.at(tokens[i]);
    rows[slot.block].push_back(slot.row);
    positions[slot.block].push_back(i);
  }
  std::vector<Var> pieces;
  std::vector<std::size_t> order(tokens.size());
  std::size_t offset = 0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    if (rows[b].empty()) continue;
    pieces.push_back(ops::gather_rows(blocks_[b], rows[b]));
    for (std::size_t k = 0; k < positions[b].size(); ++k) order[positions[b][k]] = offset + k;
    offset += rows[b].size();
  }
  if (pieces.size() == 1) {
    // Rows already come out in token order.
    return pieces[0];
  }
  return ops::gather_rows(ops::concat_rows(pieces), order);
}

Var SentenceEncoder::encode(std::span<const std::string> tokens, Rng& dropout_rng) {
  if (tokens.empty()) throw ContractError("cannot encode an empty sentence");
  Tensor words(tokens.size(), table_.dim());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].empty()) throw ContractError("cannot encode an empty token");
    const auto v = table_.lookup(tokens[i]);
    std::copy(v.begin(), v.end(), words.values().begin() + static_cast<std::ptrdiff_t>(i * table_.dim()));
  }
  const Var inputs[] = {tape_.constant(std::move(words)), char_rows(tokens)};
  Var x = ops::concat_cols(inputs);
  auto run = [&](LstmWeights& w, bool reverse) {
    return ops::lstm(x, tape_.param(w.wx), tape_.param(w.wh), tape_.param(w.bias), reverse);
  };
  const Var both[] = {run(params_.word_fwd, false), run(params_.word_bwd, true)};
  Var hidden = ops::dropout(ops::concat_cols(both), params_.config.dropout, dropout_rng);
  return ops::add_row(ops::matmul(hidden, tape_.param(params_.proj_w)), tape_.param(params_.proj_b));
}

Tensor encode_eval(std::span<const std::string> tokens, EncoderParams& params, const EmbeddingTable& table) {
  Tape tape(Mode::eval, false);
  SentenceEncoder enc(tape, params, table);
  Rng unused(0);
  return enc.encode(tokens, unused).value();
}

}  // namespace protoner
