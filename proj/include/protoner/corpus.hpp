#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protoner/rng.hpp"

namespace protoner {

/// BIO tags entities as B-X / I-X; TO collapses both to the bare class X.
enum class Scheme { bio, to };

std::string_view scheme_name(Scheme scheme);
Scheme parse_scheme(std::string_view name);

inline constexpr std::string_view kOutside = "O";

/// Class named by a tag: "B-GPE" and "GPE" give "GPE", "O" gives "".
std::string_view tag_class(std::string_view tag);
inline bool is_outside(std::string_view tag) { return tag == kOutside; }

struct LabeledSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
  Scheme scheme = Scheme::bio;

  std::size_t size() const { return tokens.size(); }
  bool has_entity() const;
  bool mentions(std::string_view cls) const;

  friend bool operator==(const LabeledSentence&, const LabeledSentence&) = default;
};

using Corpus = std::vector<LabeledSentence>;

/// Sorted distinct entity classes appearing in a corpus.
std::vector<std::string> classes_in(std::span<const LabeledSentence> corpus);

/// Ordered tag list for a task: entity tags first, O last.
class TagAlphabet {
 public:
  TagAlphabet() = default;
  explicit TagAlphabet(std::vector<std::string> tags);

  /// {B-C, I-C, O} under BIO, {C, O} under TO.
  static TagAlphabet for_class(std::string_view cls, Scheme scheme);
  /// Entity tags of every listed class in order, then O.
  static TagAlphabet for_classes(std::span<const std::string> classes, Scheme scheme);

  const std::vector<std::string>& tags() const { return tags_; }
  std::size_t size() const { return tags_.size(); }
  std::size_t outside_index() const { return tags_.size() - 1; }
  /// Throws ContractError for a tag outside the alphabet.
  std::size_t index(std::string_view tag) const;
  bool contains(std::string_view tag) const;
  const std::string& tag(std::size_t i) const { return tags_.at(i); }
  std::vector<std::size_t> encode(std::span<const std::string> tags) const;

  friend bool operator==(const TagAlphabet&, const TagAlphabet&) = default;

 private:
  std::vector<std::string> tags_;
};

// ---------------------------------------------------------------------------
// CoNLL columns

struct ConllDocument {
  Corpus sentences;
  // I-X tags not preceded by B-X/I-X; accepted and counted.
  std::size_t lenient_starts = 0;
};

/// Blank-line separated sentences of `token tag` lines (tab or space).
/// Throws ParseError naming the line for anything other than two fields or a
/// tag that is not valid under the scheme.
ConllDocument parse_conll(std::istream& in, const std::string& source, Scheme scheme = Scheme::bio);
ConllDocument read_conll(const std::string& path, Scheme scheme = Scheme::bio);
void write_conll(std::ostream& out, std::span<const LabeledSentence> corpus);
void write_conll(const std::string& path, std::span<const LabeledSentence> corpus);

/// Guesses TO when no tag carries a B-/I- prefix and some tag is not O.
Scheme detect_scheme(std::span<const LabeledSentence> corpus);

// ---------------------------------------------------------------------------
// Relabeled views. Inputs are BIO; outputs follow `scheme`.

/// Tags of cls survive, every other tag becomes O.
LabeledSentence keep_only_class(const LabeledSentence& s, std::string_view cls, Scheme scheme);
/// Tags of cls become O, every other tag survives.
LabeledSentence drop_class(const LabeledSentence& s, std::string_view cls, Scheme scheme);

/// Training data for one target class. Test sentences are deliberately absent
/// so training code cannot reach them.
struct TrainingData {
  std::string target_class;
  Scheme scheme = Scheme::bio;
  std::span<const LabeledSentence> in_domain;
  std::span<const LabeledSentence> out_of_domain;
};

/// Relabeled corpora for a target class before the few-shot sample is drawn.
struct TaskPool {
  std::string target_class;
  Scheme scheme = Scheme::bio;
  Corpus out_of_domain;
  // Validation sentences labeled only with the target class, in `scheme`.
  Corpus pool;
  // The same sentences in BIO; gold chunks are always scored in BIO.
  Corpus pool_gold;
};

struct TaskDataset {
  std::string target_class;
  Scheme scheme = Scheme::bio;
  Corpus in_domain;
  Corpus out_of_domain;
  Corpus test;
  Corpus test_gold;
  // Positions of the in-domain sample within the pool.
  std::vector<std::size_t> in_domain_pool_index;

  TrainingData training() const { return {target_class, scheme, in_domain, out_of_domain}; }
};

/// Throws TaskError when cls never occurs in validation.
TaskPool make_task(std::span<const LabeledSentence> train, std::span<const LabeledSentence> validation,
                   const std::string& cls, Scheme scheme);

// ---------------------------------------------------------------------------
// Proportion-preserving sampling

/// Fraction of sentences containing cls.
double class_proportion(std::span<const LabeledSentence> pool, std::string_view cls);

/// round(n * (1 - pr) / pr) with pr = carriers / total, computed exactly in
/// integers; halves round up.
std::size_t empty_sentence_count(std::size_t n, std::size_t carriers, std::size_t total);

struct SampleIndex {
  std::vector<std::size_t> with_class;
  std::vector<std::size_t> without_class;
};

/// Draws n distinct carriers of cls and the matching number of distinct
/// C-free sentences. Throws SamplingError with the available counts when the
/// pool is too small.
SampleIndex sample_in_domain_index(std::span<const LabeledSentence> pool, std::string_view cls,
                                   std::size_t n, Rng& rng);
/// The drawn sentences, shuffled together.
Corpus sample_in_domain(std::span<const LabeledSentence> pool, std::string_view cls, std::size_t n,
                        Rng& rng);

/// Draws the in-domain sample from the pool; the rest of the pool is the test set.
TaskDataset draw_task(const TaskPool& pool, std::size_t n, Rng& rng);

struct Episode {
  Corpus support;
  Corpus query;
};

/// Support: half of the carriers. Query: the other carriers plus half of the
/// empty sentences. The partition is redrawn on every call.
Episode split_episode(std::span<const LabeledSentence> sample, Rng& rng);

/// Per-class carrier index over out-of-domain data, built once per training run.
class OutOfDomainSampler {
 public:
  OutOfDomainSampler(std::span<const LabeledSentence> out_of_domain, Scheme scheme);

  /// Classes with at least n carrier sentences.
  std::vector<std::string> eligible(std::size_t n) const;
  /// Picks C' uniformly among eligible classes, samples with pr(C'), keeps
  /// only C' tags and splits. Throws EpisodeError when nothing is eligible.
  Episode sample(std::size_t n, Rng& rng) const;
  /// The class picked by the most recent sample().
  const std::string& last_class() const { return last_class_; }

 private:
  std::span<const LabeledSentence> corpus_;
  Scheme scheme_;
  std::map<std::string, std::vector<std::size_t>> carriers_;
  mutable std::string last_class_;
};

Episode sample_out_of_domain_episode(std::span<const LabeledSentence> out_of_domain, Rng& rng,
                                     std::size_t n, Scheme scheme = Scheme::bio);

}  // namespace protoner
