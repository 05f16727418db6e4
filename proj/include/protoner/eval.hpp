#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "protoner/corpus.hpp"

namespace protoner {

struct ChunkSpan {
  std::string cls;
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive

  friend bool operator==(const ChunkSpan&, const ChunkSpan&) = default;
  friend auto operator<=>(const ChunkSpan&, const ChunkSpan&) = default;
};

struct F1Report {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const;
  double recall() const;
  double f1() const;

  F1Report& operator+=(const F1Report& other);
  friend bool operator==(const F1Report&, const F1Report&) = default;
};

/// Chunks of a BIO sequence. An I-X that does not continue a chunk of class X
/// opens a new chunk, as conlleval does.
std::vector<ChunkSpan> extract_chunks(std::span<const std::string> tags);

/// TO -> BIO: a class tag after O (or at the start) becomes B-, after the
/// same class it becomes I-.
std::vector<std::string> to_to_bio(std::span<const std::string> tags);

/// Chunk-level counts for one sentence, restricted to class cls. Gold is
/// BIO; pred is BIO or TO as given by pred_scheme.
F1Report chunk_counts(std::span<const std::string> gold, std::span<const std::string> pred,
                      const std::string& cls, Scheme pred_scheme = Scheme::bio);

/// Micro-averaged report over a test set. Throws ContractError when sentence
/// counts or lengths differ.
F1Report chunk_f1(std::span<const LabeledSentence> gold, std::span<const std::vector<std::string>> pred,
                  const std::string& cls, Scheme pred_scheme = Scheme::bio);

/// conlleval-compatible `token gold pred` lines; predictions written in BIO.
void write_conlleval(std::ostream& out, std::span<const LabeledSentence> gold,
                     std::span<const std::vector<std::string>> pred, Scheme pred_scheme = Scheme::bio);

}  // namespace protoner
