#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>

#include "protoner/errors.hpp"
#include "protoner/eval.hpp"
#include "protoner/regimes.hpp"
#include "support/fixtures.hpp"

namespace protoner {
namespace {

using testing::tiny_config;
using testing::tiny_world;
using testing::TinyWorld;
using testing::weights_of;

RegimeConfig config_for(Regime r) {
  RegimeConfig cfg = tiny_config();
  cfg.regime = r;
  return cfg;
}

double test_f1(TrainedModel& m, const TinyWorld& w) {
  const auto pred = m.predict(w.task.test, w.data.table);
  return chunk_f1(w.task.test_gold, pred, w.task.target_class, m.scheme()).f1();
}

TEST(RegimeTest, NamesRoundTrip) {
  for (Regime r : kAllRegimes) EXPECT_EQ(parse_regime(regime_name(r)), r);
  EXPECT_EQ(regime_name(Regime::warm_proto_crf), "WarmProto-CRF");
  EXPECT_THROW(parse_regime("Nope"), ConfigError);
}

TEST(RegimeTest, DefaultsAndValidation) {
  const RegimeConfig cfg;
  EXPECT_EQ(cfg.n_support, 20u);
  EXPECT_EQ(cfg.p_in_domain, 0.5);
  EXPECT_EQ(cfg.batch_in_domain, 10u);
  EXPECT_EQ(cfg.batch_warmup, 32u);
  EXPECT_EQ(cfg.support_cap, 40u);
  EXPECT_EQ(cfg.query_cap, 60u);
  EXPECT_EQ(cfg.lr, 3e-3);
  EXPECT_EQ(cfg.l2, 0.1);
  EXPECT_EQ(cfg.dropout, 0.5);
  EXPECT_EQ(cfg.proto_dim, 64u);
  EXPECT_EQ(cfg.outside_bias_init, -4.0);
  EXPECT_EQ(cfg.epochs, 60u);
  EXPECT_EQ(cfg.proto_steps_per_epoch, 50u);
  EXPECT_NO_THROW(cfg.validate());

  RegimeConfig bad = cfg;
  bad.p_in_domain = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.batch_in_domain = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.dropout = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(BaseTest, AlphabetAndBatchCount) {
  const TinyWorld w = tiny_world();
  RegimeConfig cfg = config_for(Regime::base);
  std::size_t batches = 0;
  TrainingHooks hooks;
  hooks.on_batch = [&](std::span<const LabeledSentence> b) {
    EXPECT_LE(b.size(), cfg.batch_in_domain);
    ++batches;
  };
  const TrainedModel m = train_base(w.task.training(), w.data.table, cfg, hooks);
  EXPECT_EQ(m.alphabet.tags(), (std::vector<std::string>{"B-LOC", "I-LOC", "O"}));
  const std::size_t n = w.task.in_domain.size();
  EXPECT_EQ(batches, cfg.epochs * ((n + cfg.batch_in_domain - 1) / cfg.batch_in_domain));
  EXPECT_TRUE(m.crf.has_value());
  EXPECT_FALSE(m.prototypes.has_value());
}

TEST(BaseTest, LossFallsOverFirstEpochs) {
  const TinyWorld w = tiny_world("LOC", 8);
  RegimeConfig cfg = config_for(Regime::base);
  cfg.epochs = 5;
  cfg.lr = 0.01;
  cfg.l2 = 0.0;
  const TrainedModel m = train_base(w.task.training(), w.data.table, cfg);
  ASSERT_EQ(m.history.size(), 5u);
  double mean_delta = 0.0;
  for (std::size_t e = 1; e < 5; ++e) mean_delta += (m.history[e].loss - m.history[e - 1].loss) / 4.0;
  EXPECT_LT(mean_delta, 0.0);
  EXPECT_LT(m.history[4].loss, m.history[0].loss);
}

TEST(ProtoTest, BaseProtoIsProtoWithCertainInDomain) {
  const TinyWorld w = tiny_world();
  RegimeConfig cfg = config_for(Regime::base_proto);
  TrainedModel a = train_regime(w.task.training(), w.data.table, cfg);
  RegimeConfig p1 = cfg;
  p1.p_in_domain = 1.0;
  TrainedModel b = train_proto(w.task.training(), w.data.table, p1, nullptr, false, false);
  EXPECT_EQ(weights_of(a), weights_of(b));
  EXPECT_EQ(a.prototypes->centers, b.prototypes->centers);
  EXPECT_FALSE(a.crf.has_value());
}

TEST(ProtoTest, InDomainFractionTracksP) {
  const TinyWorld w = tiny_world();
  RegimeConfig cfg = config_for(Regime::protonet);
  cfg.epochs = 1;
  cfg.proto_steps_per_epoch = 2000;
  cfg.word_hidden = 2;
  cfg.proto_dim = 2;
  std::size_t in_domain = 0, steps = 0;
  TrainingHooks hooks;
  hooks.on_episode = [&](bool in) {
    in_domain += in ? 1 : 0;
    ++steps;
  };
  (void)train_proto(w.task.training(), w.data.table, cfg, nullptr, false, false, hooks);
  ASSERT_EQ(steps, 2000u);
  const double frac = static_cast<double>(in_domain) / 2000.0;
  EXPECT_GE(frac, 0.46);
  EXPECT_LE(frac, 0.54);
}

TEST(ProtoTest, ZeroShotNeverSeesInDomain) {
  const TinyWorld w = tiny_world();
  RegimeConfig cfg = config_for(Regime::warm_proto_zero);
  TrainingHooks hooks;
  std::size_t in_domain = 0;
  hooks.on_episode = [&](bool in) { in_domain += in ? 1 : 0; };
  hooks.on_batch = [&](std::span<const LabeledSentence> b) {
    for (const auto& s : b)
      for (const auto& t : s.tags) EXPECT_NE(tag_class(t), "LOC");
  };
  (void)train_regime(w.task.training(), w.data.table, cfg, hooks);
  EXPECT_EQ(in_domain, 0u);
}

TEST(ProtoTest, ZeroShotWeightsIgnoreTheInDomainSample) {
  const TinyWorld a = tiny_world("LOC", 4, 5), b = tiny_world("LOC", 4, 77);
  ASSERT_NE(a.task.in_domain, b.task.in_domain);
  const RegimeConfig cfg = config_for(Regime::warm_proto_zero);
  TrainedModel ma = train_regime(a.task.training(), a.data.table, cfg);
  TrainedModel mb = train_regime(b.task.training(), b.data.table, cfg);
  EXPECT_EQ(weights_of(ma), weights_of(mb));
  EXPECT_NE(ma.prototypes->centers, mb.prototypes->centers);
}

TEST(ProtoTest, CrfVariantCarriesCrf) {
  const TinyWorld w = tiny_world();
  TrainedModel m = train_regime(w.task.training(), w.data.table, config_for(Regime::warm_proto_crf));
  ASSERT_TRUE(m.crf.has_value());
  ASSERT_TRUE(m.prototypes.has_value());
  EXPECT_EQ(m.crf->transition.value.rows(), 3u);
  const auto pred = m.predict(w.task.test, w.data.table);
  EXPECT_EQ(pred.size(), w.task.test.size());
}

TEST(ProtoTest, ToSchemeUsesClassTags) {
  const TinyWorld w = tiny_world("LOC", 4, 5, Scheme::to);
  TrainedModel m = train_regime(w.task.training(), w.data.table, config_for(Regime::protonet));
  EXPECT_EQ(m.alphabet.tags(), (std::vector<std::string>{"LOC", "O"}));
  EXPECT_EQ(m.scheme(), Scheme::to);
  for (const auto& tags : m.predict(w.task.test, w.data.table))
    for (const auto& t : tags) EXPECT_TRUE(t == "LOC" || t == "O");
}

TEST(WarmStartTest, CopiesBodyAndResetsHead) {
  const TinyWorld w = tiny_world();
  const RegimeConfig cfg = tiny_config();
  const TrainedModel pre = pretrain_out_of_domain(w.task.training(), w.data.table, cfg);
  for (const auto& s : w.task.out_of_domain)
    for (const auto& t : s.tags) EXPECT_NE(tag_class(t), "LOC");
  EXPECT_FALSE(pre.alphabet.contains("B-LOC"));
  EXPECT_TRUE(pre.alphabet.contains("B-PER"));

  Rng rng(1);
  EncoderParams warm = warm_start(pre, pre.alphabet.size() + 2, true, cfg.outside_bias_init, rng);
  TrainedModel source = pre;
  const std::vector<Parameter*> src = source.encoder.transferable();
  const std::vector<Parameter*> dst = warm.transferable();
  ASSERT_EQ(src.size(), dst.size());
  for (std::size_t i = 0; i < src.size(); ++i) EXPECT_EQ(src[i]->value, dst[i]->value) << src[i]->name;
  EXPECT_NE(warm.proj_w.value.cols(), pre.encoder.proj_w.value.cols());
  ASSERT_TRUE(warm.outside_bias.has_value());
  EXPECT_EQ(warm.outside_bias->value.item(), -4.0);

  EncoderParams same_shape = warm_start(pre, pre.alphabet.size(), false, cfg.outside_bias_init, rng);
  EXPECT_NE(same_shape.proj_w.value, pre.encoder.proj_w.value);

  const Tensor before = src[0]->value;
  for (double& v : dst[0]->value.values()) v += 1.0;
  EXPECT_EQ(src[0]->value, before);
  EXPECT_EQ(pre.encoder.parameters()[0]->value, before);
}

TEST(WarmBaseTest, StageTwoUsesTargetAlphabet) {
  const TinyWorld w = tiny_world();
  TrainedModel m = train_regime(w.task.training(), w.data.table, config_for(Regime::warm_base));
  EXPECT_EQ(m.alphabet.tags(), (std::vector<std::string>{"B-LOC", "I-LOC", "O"}));
  EXPECT_EQ(m.crf->transition.value.rows(), 3u);
}

TEST(SelectEpochTest, Examples) {
  const std::vector<std::vector<double>> one{{0.1, 0.3, 0.2}};
  EXPECT_EQ(select_epoch(one), 1u);
  const std::vector<std::vector<double>> tie{{0.2, 0.4}, {0.4, 0.2}};
  EXPECT_EQ(select_epoch(tie), 0u);
  EXPECT_THROW(select_epoch(std::vector<std::vector<double>>{}), ContractError);
  const std::vector<std::vector<double>> ragged{{0.1}, {0.1, 0.2}};
  EXPECT_THROW(select_epoch(ragged), ContractError);
}

TEST(SelectEpochTest, MatchesBruteForce) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> h(3, std::vector<double>(7));
    // Coarse values so that ties actually happen.
    for (auto& row : h)
      for (double& v : row) v = static_cast<double>(rng.below(4)) / 4.0;
    std::size_t best = 0;
    double best_sum = -1.0;
    for (std::size_t e = 0; e < 7; ++e) {
      const double s = h[0][e] + h[1][e] + h[2][e];
      if (s > best_sum) {
        best_sum = s;
        best = e;
      }
    }
    EXPECT_EQ(select_epoch(h), best);
  }
}

TEST(DeterminismTest, SameSeedSameScore) {
  const TinyWorld w = tiny_world();
  for (Regime r : kAllRegimes) {
    const RegimeConfig cfg = config_for(r);
    TrainedModel a = train_regime(w.task.training(), w.data.table, cfg);
    TrainedModel b = train_regime(w.task.training(), w.data.table, cfg);
    EXPECT_EQ(test_f1(a, w), test_f1(b, w)) << regime_name(r);
    EXPECT_EQ(weights_of(a), weights_of(b)) << regime_name(r);
  }
}

TEST(IsolationTest, TestSentencesNeverReachTraining) {
  // Mark every sentence that ends up in the test set, then redraw the same
  // task: sampling looks only at tags, so the split is unchanged.
  TinyWorld w = tiny_world();
  const std::string marker = "zzsentinelzz";
  std::vector<bool> sampled(w.pool.pool.size(), false);
  for (std::size_t i : w.task.in_domain_pool_index) sampled[i] = true;
  for (std::size_t i = 0; i < w.pool.pool.size(); ++i) {
    if (!sampled[i]) w.pool.pool[i].tokens.push_back(marker), w.pool.pool[i].tags.emplace_back("O");
  }
  Rng rng(5);
  const TaskDataset task = draw_task(w.pool, 4, rng);
  ASSERT_EQ(task.in_domain_pool_index, w.task.in_domain_pool_index);
  ASSERT_FALSE(task.test.empty());
  ASSERT_EQ(task.test[0].tokens.back(), marker);

  for (Regime r : kAllRegimes) {
    std::size_t batches = 0;
    TrainingHooks hooks;
    hooks.on_batch = [&](std::span<const LabeledSentence> b) {
      ++batches;
      for (const auto& s : b) EXPECT_EQ(std::count(s.tokens.begin(), s.tokens.end(), marker), 0) << regime_name(r);
    };
    (void)train_regime(task.training(), w.data.table, config_for(r), hooks);
    EXPECT_GT(batches, 0u);
  }
}

TEST(CheckpointTest, RoundTripAndFingerprint) {
  const TinyWorld w = tiny_world();
  const RegimeConfig cfg = config_for(Regime::warm_proto_crf);
  TrainedModel m = train_regime(w.task.training(), w.data.table, cfg);
  const auto path = std::filesystem::temp_directory_path() / "protoner_ckpt_test.json";
  save_checkpoint(path.string(), m, cfg);
  TrainedModel back = load_checkpoint(path.string(), cfg, w.data.table.dim());
  EXPECT_EQ(weights_of(back), weights_of(m));
  EXPECT_EQ(back.prototypes->centers, m.prototypes->centers);
  EXPECT_EQ(back.predict(w.task.test, w.data.table), m.predict(w.task.test, w.data.table));

  RegimeConfig other = cfg;
  other.word_hidden += 1;
  EXPECT_THROW(load_checkpoint(path.string(), other, w.data.table.dim()), ConfigError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace protoner
