#include "protoner/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "protoner/errors.hpp"

namespace protoner {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic spec: bad value for '") + key + "': " + e.what());
  }
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

std::string capitalize(std::string w) {
  if (!w.empty() && w[0] >= 'a' && w[0] <= 'z') w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

LabeledSentence make_sentence(const SyntheticSpec& spec, Rng& rng) {
  const std::size_t len = spec.min_length + rng.below(spec.max_length - spec.min_length + 1);
  std::vector<std::string> background(len);
  for (auto& w : background) w = spec.background[rng.below(spec.background.size())];

  // Entities (with their optional cue) keyed by the gap they are inserted into.
  struct Insert {
    std::size_t gap;
    std::vector<std::string> tokens;
    std::vector<std::string> tags;
  };
  std::vector<Insert> inserts;
  for (const auto& cls : spec.classes) {
    if (!rng.bernoulli(cls.carrier_probability)) continue;
    std::size_t count = 1;
    while (count < 3 && rng.bernoulli(spec.repeat_probability)) ++count;
    for (std::size_t c = 0; c < count; ++c) {
      Insert ins;
      ins.gap = rng.below(len + 1);
      if (!cls.cues.empty() && rng.bernoulli(cls.cue_probability)) {
        ins.tokens.push_back(cls.cues[rng.below(cls.cues.size())]);
        ins.tags.emplace_back(kOutside);
      }
      const auto words = split_words(cls.lexicon[rng.below(cls.lexicon.size())]);
      for (std::size_t w = 0; w < words.size(); ++w) {
        ins.tokens.push_back(words[w]);
        ins.tags.push_back((w == 0 ? "B-" : "I-") + cls.name);
      }
      inserts.push_back(std::move(ins));
    }
  }
  std::stable_sort(inserts.begin(), inserts.end(), [](const Insert& a, const Insert& b) { return a.gap < b.gap; });

  LabeledSentence s;
  std::size_t next = 0;
  for (std::size_t gap = 0; gap <= len; ++gap) {
    while (next < inserts.size() && inserts[next].gap == gap) {
      s.tokens.insert(s.tokens.end(), inserts[next].tokens.begin(), inserts[next].tokens.end());
      s.tags.insert(s.tags.end(), inserts[next].tags.begin(), inserts[next].tags.end());
      ++next;
    }
    if (gap < len) {
      s.tokens.push_back(background[gap]);
      s.tags.emplace_back(kOutside);
    }
  }
  if (spec.capitalize_first && is_outside(s.tags[0])) s.tokens[0] = capitalize(s.tokens[0]);
  return s;
}

}  // namespace

SyntheticSpec parse_synthetic_spec(const json& j) {
  reject_unknown(j,
                 {"classes", "background", "train_sentences", "validation_sentences", "length", "repeat_probability",
                  "capitalize_first", "seed", "embedding"},
                 "synthetic spec");
  SyntheticSpec spec;
  spec.background = get_or<std::vector<std::string>>(j, "background", {});
  spec.train_sentences = get_or<std::size_t>(j, "train_sentences", spec.train_sentences);
  spec.validation_sentences = get_or<std::size_t>(j, "validation_sentences", spec.validation_sentences);
  if (j.contains("length")) {
    const auto len = get_or<std::vector<std::size_t>>(j, "length", {});
    if (len.size() != 2) throw ConfigError("synthetic spec: 'length' must be [min, max]");
    spec.min_length = len[0];
    spec.max_length = len[1];
  }
  spec.repeat_probability = get_or<double>(j, "repeat_probability", spec.repeat_probability);
  spec.capitalize_first = get_or<bool>(j, "capitalize_first", spec.capitalize_first);
  spec.seed = get_or<std::uint64_t>(j, "seed", spec.seed);
  if (j.contains("embedding")) {
    const json& e = j.at("embedding");
    reject_unknown(e, {"dim", "class_spread", "noise"}, "synthetic spec embedding");
    spec.embedding.dim = get_or<std::size_t>(e, "dim", spec.embedding.dim);
    spec.embedding.class_spread = get_or<double>(e, "class_spread", spec.embedding.class_spread);
    spec.embedding.noise = get_or<double>(e, "noise", spec.embedding.noise);
  }
  for (const json& c : get_or<json>(j, "classes", json::array())) {
    reject_unknown(c, {"name", "lexicon", "carrier_probability", "cues", "cue_probability"}, "synthetic class");
    SyntheticClass cls;
    cls.name = get_or<std::string>(c, "name", "");
    cls.lexicon = get_or<std::vector<std::string>>(c, "lexicon", {});
    cls.carrier_probability = get_or<double>(c, "carrier_probability", cls.carrier_probability);
    cls.cues = get_or<std::vector<std::string>>(c, "cues", {});
    cls.cue_probability = get_or<double>(c, "cue_probability", cls.cue_probability);
    spec.classes.push_back(std::move(cls));
  }

  std::set<std::string> names;
  for (const auto& c : spec.classes) {
    if (c.name.empty() || c.name == "O" || c.name.find_first_of(" \t") != std::string::npos) {
      throw ConfigError("synthetic spec: invalid class name '" + c.name + "'");
    }
    if (!names.insert(c.name).second) throw ConfigError("synthetic spec: duplicate class '" + c.name + "'");
    if (c.lexicon.empty()) throw ConfigError("synthetic spec: class '" + c.name + "' has an empty lexicon");
    for (const auto& entry : c.lexicon) {
      if (split_words(entry).empty()) throw ConfigError("synthetic spec: blank lexicon entry in '" + c.name + "'");
    }
    if (c.carrier_probability < 0.0 || c.carrier_probability > 1.0 || c.cue_probability < 0.0 ||
        c.cue_probability > 1.0) {
      throw ConfigError("synthetic spec: probabilities of '" + c.name + "' must lie in [0, 1]");
    }
  }
  if (spec.background.empty()) throw ConfigError("synthetic spec: background vocabulary is empty");
  if (spec.min_length == 0 || spec.min_length > spec.max_length) {
    throw ConfigError("synthetic spec: length range must satisfy 1 <= min <= max");
  }
  if (spec.embedding.dim == 0) throw ConfigError("synthetic spec: embedding dim must be positive");
  return spec;
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open synthetic spec " + path);
  try {
    return parse_synthetic_spec(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec, Rng& rng) {
  if (spec.background.empty()) throw ConfigError("synthetic spec: background vocabulary is empty");
  for (const auto& c : spec.classes) {
    if (c.lexicon.empty()) throw ConfigError("synthetic spec: class '" + c.name + "' has an empty lexicon");
  }
  SyntheticCorpus out;
  out.train.reserve(spec.train_sentences);
  out.validation.reserve(spec.validation_sentences);
  for (std::size_t i = 0; i < spec.train_sentences; ++i) out.train.push_back(make_sentence(spec, rng));
  for (std::size_t i = 0; i < spec.validation_sentences; ++i) out.validation.push_back(make_sentence(spec, rng));
  return out;
}

EmbeddingTable synthesize_embeddings(const SyntheticSpec& spec, Rng& rng) {
  const std::size_t dim = spec.embedding.dim;
  EmbeddingTable table(dim);
  std::vector<double> v(dim);
  for (const auto& cls : spec.classes) {
    std::vector<double> center(dim);
    for (double& x : center) x = spec.embedding.class_spread * rng.normal();
    for (const auto& entry : cls.lexicon) {
      for (const auto& w : split_words(entry)) {
        const std::string key = to_lower_ascii(w);
        if (table.contains(key)) continue;
        for (std::size_t i = 0; i < dim; ++i) v[i] = center[i] + spec.embedding.noise * rng.normal();
        table.add(key, v);
      }
    }
  }
  auto add_noise_word = [&](const std::string& w) {
    const std::string key = to_lower_ascii(w);
    if (table.contains(key)) return;
    for (double& x : v) x = spec.embedding.noise * rng.normal();
    table.add(key, v);
  };
  for (const auto& w : spec.background) add_noise_word(w);
  for (const auto& cls : spec.classes) {
    for (const auto& w : cls.cues) add_noise_word(w);
  }
  return table;
}

}  // namespace protoner
