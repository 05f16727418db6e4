#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "protoner/autodiff.hpp"
#include "protoner/corpus.hpp"

namespace protoner {

/// Linear-chain CRF scores over a tag alphabet of size K.
struct CrfParams {
  TagAlphabet alphabet;
  Parameter transition;  // KxK, row = from-tag, col = to-tag
  Parameter start;       // 1xK
  Parameter end;         // 1xK

  std::size_t size() const { return alphabet.size(); }
  std::vector<Parameter*> parameters() { return {&transition, &start, &end}; }
};

/// All scores zero.
CrfParams make_crf(TagAlphabet alphabet);

/// Unnormalized score of one tag path.
double path_score(const Tensor& emissions, std::span<const std::size_t> tags, const CrfParams& crf);

/// log Z by the forward algorithm with max-shifted log-sum-exp.
double log_partition(const Tensor& emissions, const CrfParams& crf);

/// log Z - score(tags) as a differentiable scalar. Gradients with respect to
/// emissions and all CRF scores come from forward-backward marginals.
/// Throws NumericError for non-finite emissions.
Var crf_nll(Var emissions, std::span<const std::size_t> tags, CrfParams& crf);

struct ViterbiPath {
  std::vector<std::size_t> tags;
  double score = 0.0;
};

/// Highest-scoring path; ties go to the lowest tag index.
ViterbiPath viterbi(const Tensor& emissions, const CrfParams& crf);

}  // namespace protoner
