#include "protoner/eval.hpp"

#include <algorithm>
#include <ostream>

#include "protoner/errors.hpp"

namespace protoner {

double F1Report::precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp); }
double F1Report::recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn); }
double F1Report::f1() const {
  const double p = precision(), r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

F1Report& F1Report::operator+=(const F1Report& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

std::vector<ChunkSpan> extract_chunks(std::span<const std::string> tags) {
  std::vector<ChunkSpan> chunks;
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& t = tags[i];
    const bool begin = t.starts_with("B-");
    const bool inside = t.starts_with("I-");
    if (!begin && !inside) {
      open = false;
      continue;
    }
    const std::string cls = t.substr(2);
    if (inside && open && chunks.back().cls == cls) {
      chunks.back().end = i + 1;
      continue;
    }
    chunks.push_back({cls, i, i + 1});
    open = true;
  }
  return chunks;
}

std::vector<std::string> to_to_bio(std::span<const std::string> tags) {
  std::vector<std::string> out;
  out.reserve(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (is_outside(tags[i])) {
      out.emplace_back(kOutside);
    } else if (i > 0 && tags[i - 1] == tags[i]) {
      out.push_back("I-" + tags[i]);
    } else {
      out.push_back("B-" + tags[i]);
    }
  }
  return out;
}

F1Report chunk_counts(std::span<const std::string> gold, std::span<const std::string> pred,
                      const std::string& cls, Scheme pred_scheme) {
  if (gold.size() != pred.size()) {
    throw ContractError("gold and predicted tag sequences differ in length (" + std::to_string(gold.size()) +
                        " vs " + std::to_string(pred.size()) + ")");
  }
  auto only = [&](std::vector<ChunkSpan> v) {
    std::erase_if(v, [&](const ChunkSpan& c) { return c.cls != cls; });
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto g = only(extract_chunks(gold));
  const auto p = only(pred_scheme == Scheme::to ? extract_chunks(to_to_bio(pred)) : extract_chunks(pred));
  std::vector<ChunkSpan> common;
  std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(common));
  F1Report r;
  r.tp = common.size();
  r.fp = p.size() - common.size();
  r.fn = g.size() - common.size();
  return r;
}

F1Report chunk_f1(std::span<const LabeledSentence> gold, std::span<const std::vector<std::string>> pred,
                  const std::string& cls, Scheme pred_scheme) {
  if (gold.size() != pred.size()) {
    throw ContractError("gold has " + std::to_string(gold.size()) + " sentences, prediction has " +
                        std::to_string(pred.size()));
  }
  F1Report total;
  for (std::size_t i = 0; i < gold.size(); ++i) total += chunk_counts(gold[i].tags, pred[i], cls, pred_scheme);
  return total;
}

void write_conlleval(std::ostream& out, std::span<const LabeledSentence> gold,
                     std::span<const std::vector<std::string>> pred, Scheme pred_scheme) {
  if (gold.size() != pred.size()) throw ContractError("write_conlleval: sentence count mismatch");
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != pred[s].size()) throw ContractError("write_conlleval: sentence length mismatch");
    const auto p = pred_scheme == Scheme::to ? to_to_bio(pred[s]) : pred[s];
    for (std::size_t i = 0; i < gold[s].size(); ++i) {
      out << gold[s].tokens[i] << ' ' << gold[s].tags[i] << ' ' << p[i] << '\n';
    }
    out << '\n';
  }
}

}  // namespace protoner
