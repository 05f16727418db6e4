#include "protoner/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "protoner/errors.hpp"

namespace protoner {

std::string_view scheme_name(Scheme scheme) { return scheme == Scheme::bio ? "BIO" : "TO"; }

Scheme parse_scheme(std::string_view name) {
  if (name == "BIO" || name == "bio") return Scheme::bio;
  if (name == "TO" || name == "to") return Scheme::to;
  throw ConfigError("unknown labeling scheme '" + std::string(name) + "' (expected BIO or TO)");
}

std::string_view tag_class(std::string_view tag) {
  if (tag == kOutside) return {};
  if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') return tag.substr(2);
  return tag;
}

bool LabeledSentence::has_entity() const {
  return std::any_of(tags.begin(), tags.end(), [](const std::string& t) { return !is_outside(t); });
}

bool LabeledSentence::mentions(std::string_view cls) const {
  return std::any_of(tags.begin(), tags.end(), [&](const std::string& t) { return tag_class(t) == cls; });
}

std::vector<std::string> classes_in(std::span<const LabeledSentence> corpus) {
  std::set<std::string, std::less<>> found;
  for (const auto& s : corpus) {
    for (const auto& t : s.tags) {
      if (!is_outside(t)) found.emplace(tag_class(t));
    }
  }
  return {found.begin(), found.end()};
}

TagAlphabet::TagAlphabet(std::vector<std::string> tags) : tags_(std::move(tags)) {
  if (tags_.empty() || tags_.back() != kOutside) throw ContractError("tag alphabet must end with O");
  std::set<std::string> distinct(tags_.begin(), tags_.end());
  if (distinct.size() != tags_.size()) throw ContractError("tag alphabet has duplicate tags");
}

TagAlphabet TagAlphabet::for_class(std::string_view cls, Scheme scheme) {
  const std::string c(cls);
  if (scheme == Scheme::to) return TagAlphabet({c, std::string(kOutside)});
  return TagAlphabet({"B-" + c, "I-" + c, std::string(kOutside)});
}

TagAlphabet TagAlphabet::for_classes(std::span<const std::string> classes, Scheme scheme) {
  std::vector<std::string> tags;
  for (const auto& c : classes) {
    if (scheme == Scheme::to) {
      tags.push_back(c);
    } else {
      tags.push_back("B-" + c);
      tags.push_back("I-" + c);
    }
  }
  tags.emplace_back(kOutside);
  return TagAlphabet(std::move(tags));
}

std::size_t TagAlphabet::index(std::string_view tag) const {
  for (std::size_t i = 0; i < tags_.size(); ++i) {
    if (tags_[i] == tag) return i;
  }
  throw ContractError("tag '" + std::string(tag) + "' not in alphabet");
}

bool TagAlphabet::contains(std::string_view tag) const {
  return std::find(tags_.begin(), tags_.end(), tag) != tags_.end();
}

std::vector<std::size_t> TagAlphabet::encode(std::span<const std::string> tags) const {
  std::vector<std::size_t> out;
  out.reserve(tags.size());
  for (const auto& t : tags) out.push_back(index(t));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream ss(line);
  std::string f;
  while (ss >> f) fields.push_back(f);
  return fields;
}

bool valid_tag(std::string_view tag, Scheme scheme) {
  if (tag == kOutside) return true;
  const bool prefixed = tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-';
  return scheme == Scheme::bio ? prefixed : !prefixed;
}

}  // namespace

ConllDocument parse_conll(std::istream& in, const std::string& source, Scheme scheme) {
  ConllDocument doc;
  LabeledSentence current;
  current.scheme = scheme;
  auto flush = [&] {
    if (current.tokens.empty()) return;
    for (std::size_t i = 0; i < current.tags.size(); ++i) {
      const std::string& t = current.tags[i];
      if (scheme == Scheme::bio && t.starts_with("I-")) {
        const bool continues =
            i > 0 && !is_outside(current.tags[i - 1]) && tag_class(current.tags[i - 1]) == tag_class(t);
        if (!continues) ++doc.lenient_starts;
      }
    }
    doc.sentences.push_back(std::move(current));
    current = LabeledSentence{};
    current.scheme = scheme;
  };

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_fields(line);
    if (fields.empty()) {
      flush();
      continue;
    }
    if (fields.size() != 2) {
      throw ParseError(source, lineno, "expected 2 fields, found " + std::to_string(fields.size()));
    }
    if (!valid_tag(fields[1], scheme)) {
      throw ParseError(source, lineno,
                       "tag '" + fields[1] + "' is not valid under " + std::string(scheme_name(scheme)));
    }
    current.tokens.push_back(fields[0]);
    current.tags.push_back(fields[1]);
  }
  flush();
  return doc;
}

ConllDocument read_conll(const std::string& path, Scheme scheme) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_conll(in, path, scheme);
}

void write_conll(std::ostream& out, std::span<const LabeledSentence> corpus) {
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    if (s > 0) out << '\n';
    for (std::size_t i = 0; i < corpus[s].size(); ++i) {
      out << corpus[s].tokens[i] << '\t' << corpus[s].tags[i] << '\n';
    }
  }
}

void write_conll(const std::string& path, std::span<const LabeledSentence> corpus) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_conll(out, corpus);
  if (!out) throw std::runtime_error("error writing " + path);
}

Scheme detect_scheme(std::span<const LabeledSentence> corpus) {
  bool any_entity = false;
  for (const auto& s : corpus) {
    for (const auto& t : s.tags) {
      if (is_outside(t)) continue;
      any_entity = true;
      if (t.starts_with("B-") || t.starts_with("I-")) return Scheme::bio;
    }
  }
  return any_entity ? Scheme::to : Scheme::bio;
}

// ---------------------------------------------------------------------------

LabeledSentence keep_only_class(const LabeledSentence& s, std::string_view cls, Scheme scheme) {
  LabeledSentence out{s.tokens, {}, scheme};
  out.tags.reserve(s.tags.size());
  for (const auto& t : s.tags) {
    if (!is_outside(t) && tag_class(t) == cls) {
      out.tags.push_back(scheme == Scheme::to ? std::string(cls) : t);
    } else {
      out.tags.emplace_back(kOutside);
    }
  }
  return out;
}

LabeledSentence drop_class(const LabeledSentence& s, std::string_view cls, Scheme scheme) {
  LabeledSentence out{s.tokens, {}, scheme};
  out.tags.reserve(s.tags.size());
  for (const auto& t : s.tags) {
    if (is_outside(t) || tag_class(t) == cls) {
      out.tags.emplace_back(kOutside);
    } else {
      out.tags.push_back(scheme == Scheme::to ? std::string(tag_class(t)) : t);
    }
  }
  return out;
}

TaskPool make_task(std::span<const LabeledSentence> train, std::span<const LabeledSentence> validation,
                   const std::string& cls, Scheme scheme) {
  const bool present =
      std::any_of(validation.begin(), validation.end(), [&](const auto& s) { return s.mentions(cls); });
  if (!present) throw TaskError("target class '" + cls + "' does not occur in the validation corpus");

  TaskPool task;
  task.target_class = cls;
  task.scheme = scheme;
  task.out_of_domain.reserve(train.size());
  for (const auto& s : train) task.out_of_domain.push_back(drop_class(s, cls, scheme));
  task.pool.reserve(validation.size());
  task.pool_gold.reserve(validation.size());
  for (const auto& s : validation) {
    task.pool.push_back(keep_only_class(s, cls, scheme));
    task.pool_gold.push_back(keep_only_class(s, cls, Scheme::bio));
  }
  return task;
}

// ---------------------------------------------------------------------------

double class_proportion(std::span<const LabeledSentence> pool, std::string_view cls) {
  if (pool.empty()) return 0.0;
  const auto n = std::count_if(pool.begin(), pool.end(), [&](const auto& s) { return s.mentions(cls); });
  return static_cast<double>(n) / static_cast<double>(pool.size());
}

std::size_t empty_sentence_count(std::size_t n, std::size_t carriers, std::size_t total) {
  if (carriers == 0 || carriers > total) throw SamplingError("proportion undefined: no carrier sentences");
  // floor(n * (total - carriers) / carriers + 1/2)
  const unsigned long long num = 2ULL * n * (total - carriers) + carriers;
  return static_cast<std::size_t>(num / (2ULL * carriers));
}

namespace {

SampleIndex sample_split(std::span<const LabeledSentence> pool, std::string_view cls, std::size_t n,
                         Rng& rng, const std::vector<std::size_t>* known_carriers) {
  std::vector<std::size_t> with, without;
  if (known_carriers != nullptr) {
    with = *known_carriers;
    std::size_t next = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (next < with.size() && with[next] == i) {
        ++next;
      } else {
        without.push_back(i);
      }
    }
  } else {
    for (std::size_t i = 0; i < pool.size(); ++i) (pool[i].mentions(cls) ? with : without).push_back(i);
  }
  if (with.size() < n || n == 0) {
    throw SamplingError("need " + std::to_string(n) + " sentences with class '" + std::string(cls) +
                        "', pool has " + std::to_string(with.size()) + " (of " +
                        std::to_string(pool.size()) + ")");
  }
  const std::size_t empties = empty_sentence_count(n, with.size(), pool.size());
  if (empties > without.size()) {
    throw SamplingError("need " + std::to_string(empties) + " sentences without class '" +
                        std::string(cls) + "', pool has " + std::to_string(without.size()));
  }
  SampleIndex out;
  for (std::size_t i : rng.choose(with.size(), n)) out.with_class.push_back(with[i]);
  for (std::size_t i : rng.choose(without.size(), empties)) out.without_class.push_back(without[i]);
  return out;
}

}  // namespace

SampleIndex sample_in_domain_index(std::span<const LabeledSentence> pool, std::string_view cls,
                                   std::size_t n, Rng& rng) {
  return sample_split(pool, cls, n, rng, nullptr);
}

Corpus sample_in_domain(std::span<const LabeledSentence> pool, std::string_view cls, std::size_t n,
                        Rng& rng) {
  const SampleIndex idx = sample_in_domain_index(pool, cls, n, rng);
  std::vector<std::size_t> all = idx.with_class;
  all.insert(all.end(), idx.without_class.begin(), idx.without_class.end());
  rng.shuffle(all);
  Corpus out;
  out.reserve(all.size());
  for (std::size_t i : all) out.push_back(pool[i]);
  return out;
}

TaskDataset draw_task(const TaskPool& pool, std::size_t n, Rng& rng) {
  const SampleIndex idx = sample_in_domain_index(pool.pool, pool.target_class, n, rng);
  std::vector<std::size_t> all = idx.with_class;
  all.insert(all.end(), idx.without_class.begin(), idx.without_class.end());
  rng.shuffle(all);

  TaskDataset task;
  task.target_class = pool.target_class;
  task.scheme = pool.scheme;
  task.out_of_domain = pool.out_of_domain;
  task.in_domain_pool_index = all;
  std::vector<bool> sampled(pool.pool.size(), false);
  for (std::size_t i : all) {
    sampled[i] = true;
    task.in_domain.push_back(pool.pool[i]);
  }
  for (std::size_t i = 0; i < pool.pool.size(); ++i) {
    if (sampled[i]) continue;
    task.test.push_back(pool.pool[i]);
    task.test_gold.push_back(pool.pool_gold[i]);
  }
  return task;
}

Episode split_episode(std::span<const LabeledSentence> sample, Rng& rng) {
  std::vector<std::size_t> with, without;
  for (std::size_t i = 0; i < sample.size(); ++i) (sample[i].has_entity() ? with : without).push_back(i);
  if (with.size() < 2) {
    throw EpisodeError("episode needs at least 2 sentences with entities, got " + std::to_string(with.size()));
  }
  rng.shuffle(with);
  rng.shuffle(without);
  const std::size_t half = with.size() / 2;
  Episode ep;
  for (std::size_t i = 0; i < half; ++i) ep.support.push_back(sample[with[i]]);
  for (std::size_t i = half; i < with.size(); ++i) ep.query.push_back(sample[with[i]]);
  for (std::size_t i = 0; i < without.size() / 2; ++i) ep.query.push_back(sample[without[i]]);
  return ep;
}

OutOfDomainSampler::OutOfDomainSampler(std::span<const LabeledSentence> out_of_domain, Scheme scheme)
    : corpus_(out_of_domain), scheme_(scheme) {
  for (std::size_t i = 0; i < corpus_.size(); ++i) {
    std::set<std::string, std::less<>> seen;
    for (const auto& t : corpus_[i].tags) {
      if (!is_outside(t)) seen.emplace(tag_class(t));
    }
    for (const auto& c : seen) carriers_[c].push_back(i);
  }
}

std::vector<std::string> OutOfDomainSampler::eligible(std::size_t n) const {
  std::vector<std::string> out;
  for (const auto& [cls, idx] : carriers_) {
    if (idx.size() >= n && n > 0) out.push_back(cls);
  }
  return out;
}

Episode OutOfDomainSampler::sample(std::size_t n, Rng& rng) const {
  const auto classes = eligible(n);
  if (classes.empty()) {
    throw EpisodeError("no out-of-domain class has " + std::to_string(n) + " carrier sentences");
  }
  const std::string& cls = classes[rng.below(classes.size())];
  last_class_ = cls;
  const SampleIndex idx = sample_split(corpus_, cls, n, rng, &carriers_.at(cls));
  std::vector<std::size_t> all = idx.with_class;
  all.insert(all.end(), idx.without_class.begin(), idx.without_class.end());
  rng.shuffle(all);
  Corpus relabeled;
  relabeled.reserve(all.size());
  for (std::size_t i : all) relabeled.push_back(keep_only_class(corpus_[i], cls, scheme_));
  return split_episode(relabeled, rng);
}

Episode sample_out_of_domain_episode(std::span<const LabeledSentence> out_of_domain, Rng& rng,
                                     std::size_t n, Scheme scheme) {
  return OutOfDomainSampler(out_of_domain, scheme).sample(n, rng);
}

}  // namespace protoner
