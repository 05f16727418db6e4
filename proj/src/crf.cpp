#include "protoner/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace protoner {

namespace {

void check_emissions(const Tensor& e, const CrfParams& crf) {
  if (e.cols() != crf.size()) {
    throw DimensionError("crf: emissions have " + std::to_string(e.cols()) + " columns, alphabet has " +
                         std::to_string(crf.size()));
  }
  if (!e.all_finite()) throw NumericError("crf: non-finite emission score");
}

double log_sum_exp(const double* v, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

// alpha(t, k): log-sum of scores of prefixes ending in tag k at t, including
// the emission at t.
RowMajorMatrix forward_scores(const Tensor& e, const CrfParams& crf) {
  const std::size_t T = e.rows(), K = crf.size();
  RowMajorMatrix alpha(T, K);
  std::vector<double> buf(K);
  for (std::size_t k = 0; k < K; ++k) alpha(0, k) = crf.start.value[k] + e(0, k);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t j = 0; j < K; ++j) buf[j] = alpha(t - 1, j) + crf.transition.value(j, k);
      alpha(t, k) = log_sum_exp(buf.data(), K) + e(t, k);
    }
  }
  return alpha;
}

// beta(t, k): log-sum of scores of suffixes after t given tag k at t,
// including the end score.
RowMajorMatrix backward_scores(const Tensor& e, const CrfParams& crf) {
  const std::size_t T = e.rows(), K = crf.size();
  RowMajorMatrix beta(T, K);
  std::vector<double> buf(K);
  for (std::size_t k = 0; k < K; ++k) beta(T - 1, k) = crf.end.value[k];
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t j = 0; j < K; ++j) {
      for (std::size_t k = 0; k < K; ++k) buf[k] = crf.transition.value(j, k) + e(t + 1, k) + beta(t + 1, k);
      beta(t, j) = log_sum_exp(buf.data(), K);
    }
  }
  return beta;
}

double final_log_z(const RowMajorMatrix& alpha, const CrfParams& crf) {
  const std::size_t T = alpha.rows(), K = crf.size();
  std::vector<double> buf(K);
  for (std::size_t k = 0; k < K; ++k) buf[k] = alpha(T - 1, k) + crf.end.value[k];
  return log_sum_exp(buf.data(), K);
}

}  // namespace

CrfParams make_crf(TagAlphabet alphabet) {
  const std::size_t K = alphabet.size();
  CrfParams crf{std::move(alphabet), Parameter("crf.transition", Tensor(K, K)),
                Parameter("crf.start", Tensor(1, K)), Parameter("crf.end", Tensor(1, K))};
  return crf;
}

double path_score(const Tensor& e, std::span<const std::size_t> tags, const CrfParams& crf) {
  if (tags.size() != e.rows()) throw DimensionError("crf: tag count does not match emission rows");
  double s = crf.start.value[tags[0]] + crf.end.value[tags.back()];
  for (std::size_t t = 0; t < tags.size(); ++t) {
    s += e(t, tags[t]);
    if (t > 0) s += crf.transition.value(tags[t - 1], tags[t]);
  }
  return s;
}

double log_partition(const Tensor& e, const CrfParams& crf) {
  check_emissions(e, crf);
  return final_log_z(forward_scores(e, crf), crf);
}

Var crf_nll(Var emissions, std::span<const std::size_t> tags, CrfParams& crf) {
  Tape& tape = *emissions.tape;
  const Tensor& e = emissions.value();
  check_emissions(e, crf);
  if (tags.size() != e.rows() || tags.empty()) {
    throw DimensionError("crf_nll: need one tag per emission row (T >= 1)");
  }
  for (std::size_t t : tags) {
    if (t >= crf.size()) throw ContractError("crf_nll: tag index out of range");
  }
  RowMajorMatrix alpha = forward_scores(e, crf);
  const double log_z = final_log_z(alpha, crf);
  const double nll = log_z - path_score(e, tags, crf);
  if (!std::isfinite(nll)) throw NumericError("crf_nll: non-finite negative log-likelihood");

  Var trans = tape.param(crf.transition);
  Var start = tape.param(crf.start);
  Var end = tape.param(crf.end);
  const Var in[] = {emissions, trans, start, end};
  std::vector<std::size_t> gold(tags.begin(), tags.end());
  CrfParams* params = &crf;
  return tape.record(
      Tensor::scalar(nll), in,
      [emissions, trans, start, end, gold, params, log_z, alpha = std::move(alpha)](Tape& t, const Tensor& g) {
        const CrfParams& crf = *params;
        const Tensor& e = t.value(emissions.id);
        const std::size_t T = e.rows(), K = crf.size();
        const RowMajorMatrix beta = backward_scores(e, crf);
        const double scale = g[0];
        // Unary marginals for emissions, start and end.
        RowMajorMatrix unary(T, K);
        for (std::size_t i = 0; i < T; ++i) {
          for (std::size_t k = 0; k < K; ++k) unary(i, k) = std::exp(alpha(i, k) + beta(i, k) - log_z);
        }
        if (t.needs_grad(emissions.id)) {
          Tensor& ge = t.grad_slot(emissions.id);
          for (std::size_t i = 0; i < T; ++i) {
            for (std::size_t k = 0; k < K; ++k) ge(i, k) += scale * unary(i, k);
            ge(i, gold[i]) -= scale;
          }
        }
        if (t.needs_grad(start.id)) {
          Tensor& gs = t.grad_slot(start.id);
          for (std::size_t k = 0; k < K; ++k) gs[k] += scale * unary(0, k);
          gs[gold[0]] -= scale;
        }
        if (t.needs_grad(end.id)) {
          Tensor& gn = t.grad_slot(end.id);
          for (std::size_t k = 0; k < K; ++k) gn[k] += scale * unary(T - 1, k);
          gn[gold[T - 1]] -= scale;
        }
        if (t.needs_grad(trans.id)) {
          Tensor& gt = t.grad_slot(trans.id);
          for (std::size_t i = 1; i < T; ++i) {
            for (std::size_t j = 0; j < K; ++j) {
              for (std::size_t k = 0; k < K; ++k) {
                const double pair =
                    std::exp(alpha(i - 1, j) + crf.transition.value(j, k) + e(i, k) + beta(i, k) - log_z);
                gt(j, k) += scale * pair;
              }
            }
            gt(gold[i - 1], gold[i]) -= scale;
          }
        }
      });
}

ViterbiPath viterbi(const Tensor& e, const CrfParams& crf) {
  if (e.cols() != crf.size()) throw DimensionError("viterbi: emission width does not match alphabet");
  const std::size_t T = e.rows(), K = crf.size();
  RowMajorMatrix best(T, K);
  std::vector<std::vector<std::size_t>> back(T, std::vector<std::size_t>(K, 0));
  for (std::size_t k = 0; k < K; ++k) best(0, k) = crf.start.value[k] + e(0, k);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t k = 0; k < K; ++k) {
      std::size_t arg = 0;
      double top = best(t - 1, 0) + crf.transition.value(0, k);
      for (std::size_t j = 1; j < K; ++j) {
        const double v = best(t - 1, j) + crf.transition.value(j, k);
        if (v > top) {
          top = v;
          arg = j;
        }
      }
      best(t, k) = top + e(t, k);
      back[t][k] = arg;
    }
  }
  ViterbiPath path;
  std::size_t last = 0;
  double top = best(T - 1, 0) + crf.end.value[0];
  for (std::size_t k = 1; k < K; ++k) {
    const double v = best(T - 1, k) + crf.end.value[k];
    if (v > top) {
      top = v;
      last = k;
    }
  }
  path.score = top;
  path.tags.assign(T, 0);
  path.tags[T - 1] = last;
  for (std::size_t t = T - 1; t > 0; --t) path.tags[t - 1] = back[t][path.tags[t]];
  return path;
}

}  // namespace protoner
