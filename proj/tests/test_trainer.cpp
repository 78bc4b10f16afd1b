#include <cmath>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "simpletag/checkpoint.hpp"
#include "simpletag/errors.hpp"
#include "simpletag/trainer.hpp"
#include "support.hpp"

namespace simpletag {
namespace {

ModelConfig tiny_config(std::size_t vocab) {
  ModelConfig c;
  c.encoder = {.layers = 2, .heads = 2, .model_dim = 8, .ff_dim = 16, .max_len = 16, .vocab_size = vocab, .dropout = 0.1};
  c.relpos_dim = 2;
  c.conv_blocks = 1;
  return c;
}

struct FixtureData {
  std::vector<LabeledSentence> sentences = read_v2_file(testing::data_path("fixture16.txt"));
  Vocabulary vocab = build_vocab(sentences, 1);
  std::vector<Example> examples = prepare_examples(sentences, vocab, 64);
  std::vector<const Example*> batch() const {
    std::vector<const Example*> out;
    for (const auto& e : examples) out.push_back(&e);
    return out;
  }
};

std::vector<Tensor> snapshot(const ParameterSet& set) {
  std::vector<Tensor> out;
  for (const auto& p : set.parameters) out.push_back(p.var->value);
  for (const auto& b : set.buffers) out.push_back(*b.tensor);
  return out;
}

TEST(Loss, ZeroLogitsClosedForm) {
  const auto t = encode_tags({{"good", "food"}, {{{1, 1}, {0, 0}, Sentiment::Pos}}});
  const double loss = joint_loss_value(Tensor({2, 3}), Tensor({2, 2, 4}), t);
  EXPECT_NEAR(loss, 2 * std::log(3.0) + 4 * std::log(4.0), 1e-12);
}

TEST(Loss, MatchesLogSumExpOracle) {
  Rng rng(1);
  const auto t = encode_tags(parse_v2_line("a b c d####[([0, 1], [3], 'NEG')]"));
  const auto l1 = testing::random_tensor({4, 3}, rng, -3, 3);
  const auto l2 = testing::random_tensor({4, 4, 4}, rng, -3, 3);
  double want = 0;
  auto ce = [](std::span<const Real> row, int target) {
    double m = row[0];
    for (Real v : row) m = std::max(m, v);
    double s = 0;
    for (Real v : row) s += std::exp(v - m);
    return m + std::log(s) - row[target];
  };
  for (std::size_t i = 0; i < 4; ++i) want += ce(l1.data().subspan(i * 3, 3), static_cast<int>(t.tags1d[i]));
  for (std::size_t c = 0; c < 16; ++c) want += ce(l2.data().subspan(c * 4, 4), static_cast<int>(t.tags2d[c]));
  EXPECT_NEAR(joint_loss_value(l1, l2, t), want, 1e-10);
  Tensor bad = l1;
  bad[0] = std::numeric_limits<Real>::infinity();
  EXPECT_THROW(joint_loss_value(bad, l2, t), NumericError);
  EXPECT_THROW(joint_loss_value(Tensor({3, 3}), l2, t), NumericError);
}

TEST(Optimizer, ClipsNormTenToOne) {
  ParameterSet set;
  set.add("a", ag::parameter(Tensor({2})));
  set.add("b", ag::parameter(Tensor({2})));
  set.parameters[0].var->grad = Tensor({2}, {6, 0});
  set.parameters[1].var->grad = Tensor({2}, {0, 8});
  EXPECT_NEAR(clip_grad_norm(set, 1.0), 10.0, 1e-12);
  EXPECT_NEAR(global_grad_norm(set), 1.0, 1e-6);
  EXPECT_NEAR(set.parameters[0].var->grad[0], 0.6, 1e-12);

  set.parameters[0].var->grad = Tensor({2}, {0.3, 0});
  set.parameters[1].var->grad = Tensor({2}, {0, 0.4});
  clip_grad_norm(set, 1.0);
  EXPECT_EQ(set.parameters[0].var->grad[0], 0.3);
}

TEST(Optimizer, AdamMatchesHandComputedSteps) {
  ParameterSet set;
  set.add("w", ag::parameter(Tensor({1}, {1.0})));
  Adam adam;
  const double grads[] = {0.5, -0.25};
  double m = 0, v = 0, w = 1.0;
  for (int t = 1; t <= 2; ++t) {
    set.parameters[0].var->grad = Tensor({1}, {grads[t - 1]});
    const auto stats = adam.step(set, 0.1, 100.0);
    EXPECT_EQ(stats.grad_norm, std::abs(grads[t - 1]));
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    w -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(set.parameters[0].var->value[0], w, 1e-15);
    EXPECT_TRUE(set.parameters[0].var->grad.empty());
  }
}

TEST(Optimizer, UnreachedParametersAreSkipped) {
  ParameterSet set;
  set.add("hit", ag::parameter(Tensor({1}, {1.0})));
  set.add("miss", ag::parameter(Tensor({1}, {1.0})));
  Adam adam;
  set.parameters[0].var->grad = Tensor({1}, {1.0});
  adam.step(set, 0.1, 1.0);
  EXPECT_NE(set.parameters[0].var->value[0], 1.0);
  EXPECT_EQ(set.parameters[1].var->value[0], 1.0);
  set.parameters[0].var->grad = Tensor({1}, {std::numeric_limits<Real>::quiet_NaN()});
  EXPECT_THROW(adam.step(set, 0.1, 1.0), NumericError);
}

TEST(TrainStep, ZeroLearningRateLeavesParametersUnchanged) {
  FixtureData d;
  Model model(tiny_config(d.vocab.size()), 3);
  const auto before = snapshot(model.parameters());
  Adam adam;
  TrainConfig cfg;
  cfg.learning_rate = 0;
  Rng rng(1);
  const auto batch = d.batch();
  const double loss = train_step(ModelView(model, {}), adam, batch, cfg, rng);
  EXPECT_TRUE(std::isfinite(loss));
  const auto after = snapshot(model.parameters());
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.parameters.size(); ++i) EXPECT_EQ(after[i], before[i]) << params.parameters[i].name;
}

TEST(TrainStep, TwoStepsAreBitReproducible) {
  FixtureData d;
  auto run = [&] {
    Model model(tiny_config(d.vocab.size()), 5);
    Adam adam;
    TrainConfig cfg;
    Rng rng(9);
    const auto batch = d.batch();
    std::vector<double> losses;
    for (int s = 0; s < 2; ++s) losses.push_back(train_step(ModelView(model, {}), adam, batch, cfg, rng));
    return std::make_pair(losses, checkpoint_bytes(model, d.vocab, {}));
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_TRUE(a.second == b.second);
}

TEST(TrainStep, EmptyBatchIsRejected) {
  Model model(tiny_config(4), 1);
  Adam adam;
  Rng rng(1);
  EXPECT_THROW(train_step(ModelView(model, {}), adam, {}, TrainConfig{}, rng), DataError);
}

TEST(TrainStep, DisabledAttentionBranchesFreezeTheirParameters) {
  FixtureData d;
  Model model(tiny_config(d.vocab.size()), 7);
  Ablation a;
  a.branches.attention1d = false;
  a.branches.attention2d = false;
  const auto set = model.parameters();
  const auto before = snapshot(set);
  Adam adam;
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  Rng rng(2);
  const auto batch = d.batch();
  const std::span<const Example* const> half(batch.data(), 8);
  for (int s = 0; s < 20; ++s) train_step(ModelView(model, a), adam, half, cfg, rng);
  const auto after = snapshot(set);
  for (std::size_t i = 0; i < set.parameters.size(); ++i) {
    const auto& name = set.parameters[i].name;
    const bool frozen = name.starts_with("refiner.") || name.starts_with("heads.attention");
    if (frozen) {
      EXPECT_EQ(after[i], before[i]) << name;
    } else {
      EXPECT_NE(after[i], before[i]) << name;
    }
  }
  for (std::size_t b = 0; b < set.buffers.size(); ++b) {
    const std::size_t i = set.parameters.size() + b;
    EXPECT_EQ(after[i], before[i]) << set.buffers[b].name;
  }
}

TEST(Examples, SkipLongAndConflictingSentences) {
  const std::vector<LabeledSentence> corpus{
      parse_v2_line("a b####[([0], [1], 'POS')]"),
      parse_v2_line("a b c####[([0], [1], 'POS'), ([1], [2], 'NEG')]"),
      parse_v2_line("a b c d e f####[]"),
  };
  const auto vocab = build_vocab(corpus, 1);
  std::vector<std::string> warnings;
  const auto ex = prepare_examples(corpus, vocab, 5, &warnings);
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0].ids, vocab.encode({"a", "b"}));
  ASSERT_EQ(warnings.size(), 2u);
  EXPECT_NE(warnings[0].find("sentence 2"), std::string::npos);
  EXPECT_NE(warnings[1].find("max_len"), std::string::npos);
}

TEST(Predict, OverlongSentencesGiveEmptyPredictions) {
  Model model(tiny_config(4), 1);
  Vocabulary vocab;
  std::vector<std::string> warnings;
  const std::vector<std::vector<std::string>> sentences{std::vector<std::string>(17, "x"), {}, {"x", "y"}};
  const auto out = predict(ModelView(model, {}), vocab, sentences, &warnings);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_TRUE(out[0].empty());
  EXPECT_TRUE(out[1].empty());
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Fit, LogsEveryEpochAndKeepsBestCheckpoint) {
  FixtureData d;
  Model model(tiny_config(d.vocab.size()), 11);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 5;
  std::ostringstream log;
  const auto r = fit(model, d.vocab, cfg, d.examples, d.sentences, &log);
  ASSERT_EQ(r.history.size(), 3u);
  EXPECT_EQ(r.history.back().step, 12u);  // ceil(16/5) steps per epoch
  std::istringstream lines(log.str());
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"epoch", "step", "loss", "dev_p", "dev_r", "dev_f1"}) EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["epoch"].get<std::size_t>(), ++count);
  }
  EXPECT_EQ(count, 3u);
  EXPECT_GE(r.best_epoch, 1u);
  const auto best = checkpoint_from_bytes(r.best_checkpoint);
  EXPECT_EQ(best.vocab, d.vocab);
}

TEST(Fit, RejectsInvalidConfiguration) {
  FixtureData d;
  Model model(tiny_config(d.vocab.size()), 1);
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(fit(model, d.vocab, cfg, d.examples, {}), ConfigError);
  cfg = {};
  cfg.ablation.branches.token2d = false;
  cfg.ablation.branches.attention2d = false;
  EXPECT_THROW(fit(model, d.vocab, cfg, d.examples, {}), ConfigError);
  EXPECT_THROW(fit(model, d.vocab, TrainConfig{}, {}, {}), DataError);
}

}  // namespace
}  // namespace simpletag
