#include "protoner/embeddings.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "protoner/errors.hpp"

namespace protoner {

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim), zero_(dim, 0.0) {
  if (dim == 0) throw ContractError("embedding dimension must be positive");
}

bool EmbeddingTable::contains(std::string_view word) const { return index_.contains(std::string(word)); }

void EmbeddingTable::add(const std::string& word, std::span<const double> vector) {
  if (vector.size() != dim_) {
    throw DimensionError("embedding for '" + word + "' has length " + std::to_string(vector.size()) +
                         ", table dimension is " + std::to_string(dim_));
  }
  if (auto it = index_.find(word); it != index_.end()) {
    std::copy(vector.begin(), vector.end(), data_.begin() + static_cast<std::ptrdiff_t>(it->second * dim_));
    return;
  }
  index_.emplace(word, words_.size());
  words_.push_back(word);
  data_.insert(data_.end(), vector.begin(), vector.end());
}

std::span<const double> EmbeddingTable::lookup(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) it = index_.find(to_lower_ascii(word));
  if (it == index_.end()) return zero_;
  return std::span<const double>(data_).subspan(it->second * dim_, dim_);
}

namespace {

std::vector<std::string> tokens_of(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string t;
  while (ss >> t) out.push_back(t);
  return out;
}

bool parse_size(const std::string& s, std::size_t& v) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_double(const std::string& s, double& v) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

EmbeddingTable EmbeddingTable::parse(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  std::size_t dim = 0;
  std::size_t expected_count = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tok = tokens_of(line);
    if (tok.empty()) continue;
    std::size_t a = 0, b = 0;
    if (rows.empty() && !header && tok.size() == 2 && parse_size(tok[0], a) && parse_size(tok[1], b)) {
      header = true;
      expected_count = a;
      dim = b;
      if (dim == 0) throw ParseError(source, lineno, "header declares dimension 0");
      continue;
    }
    if (tok.size() < 2) throw ParseError(source, lineno, "expected a word followed by its vector");
    if (dim == 0) dim = tok.size() - 1;
    if (tok.size() - 1 != dim) {
      throw ParseError(source, lineno,
                       "vector has " + std::to_string(tok.size() - 1) + " values, expected " + std::to_string(dim));
    }
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      if (!parse_double(tok[i + 1], v[i])) {
        throw ParseError(source, lineno, "not a number: '" + tok[i + 1] + "'");
      }
    }
    rows.emplace_back(tok[0], std::move(v));
  }
  if (dim == 0) throw ParseError(source, lineno, "no embeddings found");
  if (header && expected_count != rows.size()) {
    throw ParseError(source, lineno,
                     "header declares " + std::to_string(expected_count) + " entries, found " +
                         std::to_string(rows.size()));
  }
  EmbeddingTable table(dim);
  for (auto& [w, v] : rows) table.add(w, v);
  return table;
}

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse(in, path);
}

void EmbeddingTable::write(std::ostream& out) const {
  out << words_.size() << ' ' << dim_ << '\n';
  char buf[32];
  for (std::size_t w = 0; w < words_.size(); ++w) {
    out << words_[w];
    for (std::size_t i = 0; i < dim_; ++i) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, data_[w * dim_ + i]);
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(p - buf));
    }
    out << '\n';
  }
}

void EmbeddingTable::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write(out);
}

EmbeddingTable EmbeddingTable::random(std::span<const std::string> vocabulary, std::size_t dim, double scale,
                                      Rng& rng) {
  EmbeddingTable table(dim);
  std::vector<double> v(dim);
  for (const auto& w : vocabulary) {
    if (table.contains(w)) continue;
    for (double& x : v) x = scale * rng.normal();
    table.add(w, v);
  }
  return table;
}

}  // namespace protoner
