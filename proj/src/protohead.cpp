#include "protoner/protohead.hpp"

#include <algorithm>
#include <cmath>

namespace protoner {

std::optional<std::size_t> PrototypeSet::find(std::string_view tag) const {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == tag) return i;
  }
  return std::nullopt;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

namespace {

// Support tokens grouped by alphabet entity tag, in alphabet order:
// members[k] lists global token rows of tag k.
struct Grouping {
  std::vector<std::string> tags;
  std::vector<std::vector<std::size_t>> members;
  std::size_t total_rows = 0;
};

template <typename Item>
Grouping group_support(std::span<const Item> support, const TagAlphabet& alphabet,
                       std::size_t (*rows_of)(const Item&)) {
  std::vector<std::vector<std::size_t>> by_tag(alphabet.size());
  std::size_t offset = 0;
  for (const Item& item : support) {
    const std::size_t n = rows_of(item);
    if (item.tags.size() != n) throw ContractError("support tags do not match encoding rows");
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& t = item.tags[i];
      if (is_outside(t) || !alphabet.contains(t)) continue;
      by_tag[alphabet.index(t)].push_back(offset + i);
    }
    offset += n;
  }
  Grouping g;
  g.total_rows = offset;
  for (std::size_t k = 0; k + 1 < alphabet.size(); ++k) {
    if (by_tag[k].empty()) continue;
    g.tags.push_back(alphabet.tag(k));
    g.members.push_back(std::move(by_tag[k]));
  }
  if (g.tags.empty()) throw EmptySupportError("support set contains no entity tags of the task alphabet");
  return g;
}

Tensor averaging_matrix(const Grouping& g) {
  Tensor a(g.tags.size(), g.total_rows);
  for (std::size_t k = 0; k < g.tags.size(); ++k) {
    const double w = 1.0 / static_cast<double>(g.members[k].size());
    for (std::size_t r : g.members[k]) a(k, r) = w;
  }
  return a;
}

std::size_t var_rows(const SupportEncoding& s) { return s.rows.shape().rows; }
std::size_t tensor_rows(const SupportTensor& s) { return s.rows.rows(); }

}  // namespace

PrototypeVars build_prototypes(std::span<const SupportEncoding> support, const TagAlphabet& alphabet) {
  if (support.empty()) throw EmptySupportError("empty support set");
  const std::size_t width = support[0].rows.shape().cols;
  std::vector<Var> rows;
  for (const auto& s : support) {
    if (s.rows.shape().cols != width) throw ContractError("support encodings differ in width");
    rows.push_back(s.rows);
  }
  const Grouping g = group_support<SupportEncoding>(support, alphabet, &var_rows);
  Tape& tape = *support[0].rows.tape;
  Var stacked = ops::concat_rows(rows);
  Var centers = ops::matmul(tape.constant(averaging_matrix(g)), stacked);
  return {g.tags, centers};
}

PrototypeSet build_prototypes(std::span<const SupportTensor> support, const TagAlphabet& alphabet) {
  if (support.empty()) throw EmptySupportError("empty support set");
  const std::size_t width = support[0].rows.cols();
  for (const auto& s : support) {
    if (s.rows.cols() != width) throw ContractError("support encodings differ in width");
  }
  const Grouping g = group_support<SupportTensor>(support, alphabet, &tensor_rows);
  PrototypeSet out;
  out.tags = g.tags;
  out.centers = Tensor(g.tags.size(), width);
  // Row offsets of each support item.
  std::vector<std::pair<std::size_t, std::size_t>> locate(g.total_rows);
  std::size_t offset = 0;
  for (std::size_t s = 0; s < support.size(); ++s) {
    for (std::size_t i = 0; i < support[s].rows.rows(); ++i) locate[offset + i] = {s, i};
    offset += support[s].rows.rows();
  }
  for (std::size_t k = 0; k < g.tags.size(); ++k) {
    for (std::size_t r : g.members[k]) {
      const auto [s, i] = locate[r];
      for (std::size_t c = 0; c < width; ++c) out.centers(k, c) += support[s].rows(i, c);
    }
    for (std::size_t c = 0; c < width; ++c) out.centers(k, c) /= static_cast<double>(g.members[k].size());
  }
  return out;
}

Var token_logits(Var rows, const PrototypeVars& protos, Var outside_bias, const TagAlphabet& alphabet) {
  if (rows.shape().cols != protos.centers.shape().cols) {
    throw ContractError("token_logits: encoding width " + std::to_string(rows.shape().cols) +
                        " does not match prototype width " + std::to_string(protos.centers.shape().cols));
  }
  Tape& tape = *rows.tape;
  const std::size_t n = rows.shape().rows;
  Var neg = ops::scale(ops::squared_distance(rows, protos.centers), -1.0);
  std::vector<Var> cols;
  for (std::size_t k = 0; k + 1 < alphabet.size(); ++k) {
    auto it = std::find(protos.tags.begin(), protos.tags.end(), alphabet.tag(k));
    if (it == protos.tags.end()) {
      cols.push_back(tape.constant(Tensor(n, 1, kMissingPrototypeLogit)));
    } else {
      const auto j = static_cast<std::size_t>(it - protos.tags.begin());
      cols.push_back(ops::slice_cols(neg, j, j + 1));
    }
  }
  cols.push_back(ops::broadcast(outside_bias, n, 1));
  return ops::concat_cols(cols);
}

std::vector<double> token_logits(std::span<const double> row, const PrototypeSet& protos, double outside_bias,
                                 const TagAlphabet& alphabet) {
  if (row.size() != protos.dim()) {
    throw ContractError("token_logits: row width " + std::to_string(row.size()) + " does not match prototype width " +
                        std::to_string(protos.dim()));
  }
  std::vector<double> out(alphabet.size(), kMissingPrototypeLogit);
  for (std::size_t k = 0; k + 1 < alphabet.size(); ++k) {
    const auto j = protos.find(alphabet.tag(k));
    if (!j) continue;
    double d = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double diff = row[c] - protos.centers(*j, c);
      d += diff * diff;
    }
    out[k] = -d;
  }
  out.back() = outside_bias;
  return out;
}

TokenDistribution token_distribution(std::span<const double> row, const PrototypeSet& protos, double outside_bias,
                                     const TagAlphabet& alphabet) {
  const auto logits = token_logits(row, protos, outside_bias, alphabet);
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (double& v : p) v /= z;
  return {alphabet.tags(), std::move(p)};
}

QueryLogits episode_logits(Tape& tape, const Episode& episode, EncoderParams& params, const EmbeddingTable& table,
                           const TagAlphabet& alphabet, Rng& dropout_rng) {
  if (!params.outside_bias) throw ContractError("episode requires an encoder with the prototype head (b_O)");
  if (episode.support.empty()) throw EmptySupportError("episode has an empty support set");
  if (episode.query.empty()) throw EpisodeError("episode has an empty query set");
  SentenceEncoder enc(tape, params, table);
  enc.prepare(episode.support);
  enc.prepare(episode.query);
  std::vector<SupportEncoding> support;
  support.reserve(episode.support.size());
  for (const auto& s : episode.support) support.push_back({enc.encode(s, dropout_rng), s.tags});
  const PrototypeVars protos = build_prototypes(support, alphabet);
  Var bias = tape.param(*params.outside_bias);

  QueryLogits q;
  for (const auto& s : episode.query) {
    q.logits.push_back(token_logits(enc.encode(s, dropout_rng), protos, bias, alphabet));
    q.gold.push_back(alphabet.encode(s.tags));
    q.tokens += s.size();
  }
  return q;
}

Var cross_entropy(const QueryLogits& q) {
  if (q.logits.empty()) throw EpisodeError("no query logits");
  std::vector<Var> picked;
  picked.reserve(q.logits.size());
  for (std::size_t i = 0; i < q.logits.size(); ++i) {
    picked.push_back(ops::pick(ops::log_softmax(q.logits[i]), q.gold[i]));
  }
  return ops::scale(ops::sum(ops::concat_rows(picked)), -1.0 / static_cast<double>(q.tokens));
}

Var episode_loss(Tape& tape, const Episode& episode, EncoderParams& params, const EmbeddingTable& table,
                 const TagAlphabet& alphabet, Rng& dropout_rng) {
  return cross_entropy(episode_logits(tape, episode, params, table, alphabet, dropout_rng));
}

PrototypeSet freeze_prototypes(std::span<const LabeledSentence> support, EncoderParams& params,
                               const EmbeddingTable& table, const TagAlphabet& alphabet) {
  std::vector<SupportTensor> items;
  for (const auto& s : support) {
    if (!s.has_entity()) continue;
    items.push_back({encode_eval(s.tokens, params, table), s.tags});
  }
  return build_prototypes(std::span<const SupportTensor>(items), alphabet);
}

Tensor prototype_logits(std::span<const std::string> tokens, EncoderParams& params, const EmbeddingTable& table,
                        const PrototypeSet& protos, const TagAlphabet& alphabet) {
  if (!params.outside_bias) throw ContractError("prototype prediction requires b_O");
  const Tensor enc = encode_eval(tokens, params, table);
  const double bias = params.outside_bias->value.item();
  Tensor out(enc.rows(), alphabet.size());
  for (std::size_t r = 0; r < enc.rows(); ++r) {
    const auto row = token_logits(enc.row_span(r), protos, bias, alphabet);
    std::copy(row.begin(), row.end(), out.values().begin() + static_cast<std::ptrdiff_t>(r * alphabet.size()));
  }
  return out;
}

std::vector<std::string> predict_tags(std::span<const std::string> tokens, EncoderParams& params,
                                      const EmbeddingTable& table, const PrototypeSet& protos,
                                      const TagAlphabet& alphabet, const CrfParams* crf) {
  const Tensor logits = prototype_logits(tokens, params, table, protos, alphabet);
  std::vector<std::string> out;
  out.reserve(tokens.size());
  if (crf != nullptr) {
    for (std::size_t k : viterbi(logits, *crf).tags) out.push_back(alphabet.tag(k));
    return out;
  }
  for (std::size_t r = 0; r < logits.rows(); ++r) out.push_back(alphabet.tag(argmax(logits.row_span(r))));
  return out;
}

}  // namespace protoner
