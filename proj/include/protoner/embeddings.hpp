#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "protoner/rng.hpp"

namespace protoner {

/// Fixed word vectors. Lookup tries the exact word, then its lowercase form,
/// and returns the zero vector for anything else.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return index_.size(); }
  bool contains(std::string_view word) const;

  void add(const std::string& word, std::span<const double> vector);
  std::span<const double> lookup(std::string_view word) const;

  /// `word v1 ... vD` per line, optional `count dim` header line.
  /// Throws ParseError with the line number on malformed input.
  static EmbeddingTable parse(std::istream& in, const std::string& source);
  static EmbeddingTable load(const std::string& path);
  void write(std::ostream& out) const;
  void save(const std::string& path) const;

  /// Independent N(0, scale^2) vectors for each word.
  static EmbeddingTable random(std::span<const std::string> vocabulary, std::size_t dim, double scale, Rng& rng);

 private:
  std::size_t dim_;
  std::vector<std::string> words_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> zero_;
};

std::string to_lower_ascii(std::string_view s);

}  // namespace protoner
