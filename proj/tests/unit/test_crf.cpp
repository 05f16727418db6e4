#include <gtest/gtest.h>

#include <cmath>

#include "protoner/crf.hpp"
#include "support/gradcheck.hpp"
#include "support/instances.hpp"
#include "support/oracles.hpp"

namespace protoner {
namespace {

using testing::enumerate_crf;
using testing::random_crf;
using testing::random_tensor;

double nll(const Tensor& em, const std::vector<std::size_t>& tags, CrfParams& crf) {
  Tape tape(Mode::eval, false);
  return crf_nll(tape.constant(em), tags, crf).value().item();
}

TEST(CrfTest, SingleStepIsSoftmaxCrossEntropy) {
  CrfParams crf = make_crf(TagAlphabet({"B-C", "I-C", "O"}));
  for (double& v : crf.transition.value.values()) v = 3.0;  // unused at T=1
  const Tensor em = Tensor::row({0.2, -1.0, 1.5});
  const double z = std::exp(0.2) + std::exp(-1.0) + std::exp(1.5);
  EXPECT_NEAR(nll(em, {1}, crf), std::log(z) + 1.0, 1e-14);
}

TEST(CrfTest, UniformChainIsLogOfPathCount) {
  CrfParams crf = make_crf(TagAlphabet({"B-C", "I-C", "O"}));
  const Tensor em(2, 3);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) EXPECT_NEAR(nll(em, {a, b}, crf), std::log(9.0), 1e-14);
}

TEST(CrfTest, NllMatchesEnumeration) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t t = 1 + rng.below(5), k = 1 + rng.below(4);
    CrfParams crf = random_crf(k, rng);
    const Tensor em = random_tensor(t, k, rng, 2.0);
    const auto ref = enumerate_crf(em, crf);
    const auto tags = testing::path_from_code(rng.below(ref.scores.size()), t, k);
    const double expected = ref.log_z - ref.scores[testing::path_code(tags, k)];
    EXPECT_NEAR(nll(em, tags, crf), expected, 1e-9);
    EXPECT_NEAR(log_partition(em, crf), ref.log_z, 1e-9);
    EXPECT_NEAR(path_score(em, tags, crf), ref.scores[testing::path_code(tags, k)], 1e-12);
  }
}

TEST(CrfTest, ViterbiMatchesEnumeratedArgmax) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t t = 1 + rng.below(5), k = 1 + rng.below(4);
    CrfParams crf = random_crf(k, rng);
    const Tensor em = random_tensor(t, k, rng, 2.0);
    const auto ref = enumerate_crf(em, crf);
    const ViterbiPath v = viterbi(em, crf);
    EXPECT_EQ(v.tags, ref.best);
    EXPECT_NEAR(v.score, ref.best_score, 1e-12);
  }
}

TEST(CrfTest, RandomFiveByFourAgainstAllPaths) {
  Rng rng(3);
  CrfParams crf = random_crf(4, rng);
  const Tensor em = random_tensor(5, 4, rng);
  const auto ref = enumerate_crf(em, crf);
  EXPECT_EQ(ref.scores.size(), 1024u);
  EXPECT_EQ(viterbi(em, crf).tags, ref.best);
}

TEST(CrfTest, ProbabilitiesSumToOne) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t t = 1 + rng.below(5), k = 1 + rng.below(4);
    CrfParams crf = random_crf(k, rng);
    const Tensor em = random_tensor(t, k, rng, 3.0);
    std::size_t paths = 1;
    for (std::size_t i = 0; i < t; ++i) paths *= k;
    double total = 0.0;
    for (std::size_t code = 0; code < paths; ++code) total += std::exp(-nll(em, testing::path_from_code(code, t, k), crf));
    EXPECT_NEAR(total, 1.0, 1e-8);
  }
}

TEST(ViterbiTest, ZeroTransitionsDecodePerPosition) {
  Rng rng(5);
  CrfParams crf = make_crf(TagAlphabet({"A", "B", "C", "O"}));
  const Tensor em = random_tensor(6, 4, rng);
  const auto path = viterbi(em, crf).tags;
  for (std::size_t t = 0; t < 6; ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 4; ++k)
      if (em(t, k) > em(t, best)) best = k;
    EXPECT_EQ(path[t], best);
  }
}

TEST(ViterbiTest, RowShiftKeepsPath) {
  Rng rng(6);
  CrfParams crf = random_crf(3, rng);
  Tensor em = random_tensor(4, 3, rng);
  const auto before = viterbi(em, crf).tags;
  for (std::size_t k = 0; k < 3; ++k) em(2, k) += 17.5;
  EXPECT_EQ(viterbi(em, crf).tags, before);
}

TEST(ViterbiTest, TiesGoToLowestIndex) {
  CrfParams crf = make_crf(TagAlphabet({"A", "B", "O"}));
  EXPECT_EQ(viterbi(Tensor(3, 3), crf).tags, (std::vector<std::size_t>{0, 0, 0}));
  EXPECT_EQ(viterbi(Tensor::row({1.0, 5.0, 5.0}), crf).tags, std::vector<std::size_t>{1});
}

TEST(CrfTest, LargeEmissionsStayFinite) {
  Rng rng(7);
  CrfParams crf = random_crf(4, rng);
  Tensor em(5, 4);
  for (double& v : em.values()) v = rng.uniform(-1e3, 1e3);
  const double v = nll(em, {0, 1, 2, 3, 0}, crf);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_GE(v, 0.0);
}

TEST(CrfTest, NonFiniteEmissionIsNumericError) {
  CrfParams crf = make_crf(TagAlphabet({"A", "O"}));
  Tensor em(2, 2);
  em(1, 0) = std::nan("");
  EXPECT_THROW(nll(em, {0, 1}, crf), NumericError);
}

TEST(CrfTest, ShapeAndTagChecks) {
  CrfParams crf = make_crf(TagAlphabet({"A", "O"}));
  EXPECT_THROW(nll(Tensor(2, 3), {0, 1}, crf), DimensionError);
  EXPECT_THROW(nll(Tensor(2, 2), {0}, crf), DimensionError);
  EXPECT_THROW(nll(Tensor(2, 2), {0, 2}, crf), ContractError);
}

TEST(CrfTest, GradientsMatchFiniteDifferences) {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const auto r = testing::crf_gradcheck(trial);
    EXPECT_TRUE(r.ok) << "trial " << trial << ": " << r.first_failure;
  }
}

}  // namespace
}  // namespace protoner
