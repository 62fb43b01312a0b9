#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "floydnet/graph/oracles.hpp"
#include "floydnet/train/train.hpp"
#include "support.hpp"

using namespace floydnet;
using namespace floydnet::train;
using nn::Parameter;
using testutil::random_tensor;

namespace {

double eval_loss(const Tensor& pred, const Tensor& target, const std::vector<std::uint8_t>& mask, LossKind kind) {
  Tape tape;
  return tape.value(loss(tape, tape.constant(pred), target, mask, kind))[0];
}

TrainConfig tiny_train_config() {
  TrainConfig t;
  t.epochs = 2;
  t.steps_per_epoch = 2;
  t.accumulation = 2;
  t.warmup = 2;
  t.train_min_n = 4;
  t.train_max_n = 5;
  t.eval_n = 5;
  t.eval_graphs = 3;
  t.seed = 3;
  return t;
}

}  // namespace

TEST(Loss, ZeroResidualAndMaxEntropy) {
  nn::Rng rng(1);
  const Tensor t = random_tensor({4, 3}, rng, 0.1, 0.9);
  const std::vector<std::uint8_t> all(12, 1);
  EXPECT_EQ(eval_loss(t, t, all, LossKind::kMse), 0.0);
  EXPECT_EQ(eval_loss(t, t, all, LossKind::kMae), 0.0);
  Tensor half({6}, 0.5), balanced({6}, {0, 1, 0, 1, 1, 0});
  EXPECT_NEAR(eval_loss(half, balanced, std::vector<std::uint8_t>(6, 1), LossKind::kBce), std::log(2.0), 1e-15);
}

TEST(Loss, MatchesScalarLoops) {
  nn::Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor p = random_tensor({5, 5, 1}, rng, 0.05, 0.95), t = random_tensor({5, 5, 1}, rng, 0.0, 1.0);
    std::vector<std::uint8_t> mask(25);
    for (std::size_t i = 0; i < 25; ++i) mask[i] = (i * 7 + trial) % 3 != 0;
    double mse = 0, mae = 0, bce = 0, cnt = 0;
    for (std::size_t i = 0; i < 25; ++i) {
      if (!mask[i]) continue;
      const double r = p[i] - t[i];
      mse += r * r;
      mae += std::abs(r);
      bce -= t[i] * std::log(p[i]) + (1 - t[i]) * std::log(1 - p[i]);
      cnt += 1;
    }
    EXPECT_NEAR(eval_loss(p, t, mask, LossKind::kMse), mse / cnt, 1e-12);
    EXPECT_NEAR(eval_loss(p, t, mask, LossKind::kMae), mae / cnt, 1e-12);
    EXPECT_NEAR(eval_loss(p, t, mask, LossKind::kBce), bce / cnt, 1e-12);
  }
}

TEST(Loss, Errors) {
  Tape tape;
  const Var p = tape.constant(Tensor({3}));
  EXPECT_THROW(loss(tape, p, Tensor({4}), {1, 1, 1, 1}, LossKind::kMse), nn::ShapeError);
  EXPECT_THROW(loss(tape, p, Tensor({3}), {0, 0, 0}, LossKind::kMse), nn::ShapeError);
  EXPECT_THROW(parse_loss("huber"), std::invalid_argument);
}

TEST(Loss, MaskedEntriesGetZeroGradient) {
  nn::Rng rng(3);
  for (auto kind : {LossKind::kMse, LossKind::kMae, LossKind::kBce}) {
    Parameter pred("pred", random_tensor({4, 4, 1}, rng, 0.1, 0.9));
    const Tensor target = random_tensor({4, 4, 1}, rng, 0.0, 1.0);
    std::vector<std::uint8_t> mask(16, 1);
    for (std::size_t i = 0; i < 4; ++i) mask[i * 5] = 0;
    mask[3] = 0;
    Tape tape;
    tape.backward(loss(tape, tape.parameter(pred), target, mask, kind));
    for (std::size_t i = 0; i < 16; ++i) {
      if (mask[i]) EXPECT_NE(pred.grad[i], 0.0);
      else EXPECT_EQ(pred.grad[i], 0.0);
    }
  }
}

TEST(Loss, ModelParametersUnaffectedByMaskedPairs) {
  // the gradient reaching R through the readout is exactly zero on the
  // SuperNode row/column and on masked pairs
  auto cfg = task_model_config(Task::kShortestPath, 1, 8, 2, 1);
  auto params = model::ModelParams::init(cfg);
  TrainConfig tc;
  Example ex = make_example(Task::kShortestPath, 5, 0.3, 11, tc);
  Tape tape;
  Var r = model::model_forward(tape, ex.g, cfg, params);
  Var out = model::readout(tape, r, 5, cfg, model::ReadoutLevel::kEdge, params.decoder);
  tape.backward(loss(tape, out, ex.target, ex.mask, LossKind::kMse));
  ASSERT_NE(tape.grad(out), nullptr);
  const Tensor& g = *tape.grad(out);
  for (std::size_t i = 0; i < 25; ++i)
    if (!ex.mask[i]) EXPECT_EQ(g[i], 0.0);
}

TEST(AdamW, ZeroGradientIsFixedPoint) {
  Parameter p("p", Tensor({3}, {1.0, -2.0, 0.5}));
  const Tensor before = p.value;
  AdamWState st;
  adamw_step({&p}, st, AdamWConfig{}, 0.1);
  EXPECT_TRUE(nn::bitwise_equal(p.value, before));
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  Parameter p("p", Tensor({1}, {3.0}));
  p.grad[0] = 1.0;
  AdamWState st;
  AdamWConfig cfg;
  adamw_step({&p}, st, cfg, 0.1);
  // m_hat = 1, v_hat = 1 after bias correction
  EXPECT_NEAR(p.value[0], 3.0 - 0.1 / (1.0 + cfg.epsilon), 1e-15);
  EXPECT_EQ(st.step, 1u);
}

TEST(AdamW, DecoupledDecay) {
  Parameter p("p", Tensor({2}, {2.0, -4.0}));
  AdamWState st;
  AdamWConfig cfg;
  cfg.weight_decay = 0.01;
  adamw_step({&p}, st, cfg, 0.1);
  EXPECT_DOUBLE_EQ(p.value[0], 2.0 * (1 - 0.1 * 0.01));
  EXPECT_DOUBLE_EQ(p.value[1], -4.0 * (1 - 0.1 * 0.01));
}

TEST(AdamW, RejectsNonFiniteGradient) {
  Parameter p("p", Tensor({1}, {1.0}));
  p.grad[0] = std::nan("");
  AdamWState st;
  EXPECT_THROW(adamw_step({&p}, st, AdamWConfig{}, 0.1), nn::NumericError);
}

TEST(Schedule, ClipWarmupPlateau) {
  Parameter a("a", Tensor({2})), b("b", Tensor({1}));
  a.grad = Tensor({2}, {3.0, 0.0});
  b.grad = Tensor({1}, {4.0});
  EXPECT_DOUBLE_EQ(clip_grad_norm({&a, &b}, 1.0), 5.0);
  EXPECT_NEAR(a.grad[0], 0.6, 1e-15);
  EXPECT_NEAR(b.grad[0], 0.8, 1e-15);
  zero_grads({&a, &b});
  EXPECT_EQ(a.grad[0], 0.0);

  EXPECT_DOUBLE_EQ(warmup_scale(0, 100), 0.01);
  EXPECT_DOUBLE_EQ(warmup_scale(99, 100), 1.0);
  EXPECT_DOUBLE_EQ(warmup_scale(500, 100), 1.0);
  EXPECT_DOUBLE_EQ(warmup_scale(0, 0), 1.0);

  PlateauScheduler s(0.5, 2, 0.2);
  s.report(1.0);
  s.report(1.0);
  s.report(1.0);
  EXPECT_EQ(s.scale(), 1.0);
  s.report(1.0);
  EXPECT_EQ(s.scale(), 0.5);
  s.report(0.5);
  EXPECT_EQ(s.scale(), 0.5);
  for (int i = 0; i < 20; ++i) s.report(0.9);
  EXPECT_EQ(s.scale(), 0.2);
}

TEST(Data, ShortestPathTargets) {
  TrainConfig tc;
  const Example ex = make_example(Task::kShortestPath, 8, 0.3, 5, tc);
  const auto dm = graph::floyd_warshall_oracle(ex.g);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      const bool sup = i != j && dm.is_reachable(i, j);
      EXPECT_EQ(ex.mask[i * 8 + j] != 0, sup);
      if (sup) EXPECT_DOUBLE_EQ(ex.target[i * 8 + j], dm.at(i, j) / dm.diameter());
      for (std::size_t k = 0; k < 8; ++k)
        if (ex.g.has_edge(i, k)) EXPECT_TRUE(ex.g.weight(i, k) >= 1 && ex.g.weight(i, k) <= tc.max_weight);
    }
}

TEST(Data, TriangleTargets) {
  TrainConfig tc;
  const Example ex = make_example(Task::kCycleCount, 8, 0.5, 5, tc);
  const auto c = graph::cycle_count_oracle(ex.g, 3);
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_EQ(ex.mask[i] != 0, ex.g.has_edge(i / 8, i % 8));
    if (ex.mask[i]) EXPECT_EQ(ex.target[i], c.edge[i]);
  }
  const auto set = make_eval_set(tc, 12, 4, 9);
  ASSERT_EQ(set.size(), 4u);
  for (const auto& e : set) EXPECT_EQ(e.g.n(), 12u);
}

TEST(Config, ParseTrainKeys) {
  const auto c = parse_train_config({{"lr", "0.01"}, {"beta2", "0.99"}, {"epochs", "3"}, {"task", "cycle_count"}});
  EXPECT_EQ(c.lr, 0.01);
  EXPECT_EQ(c.adam.beta2, 0.99);
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_EQ(c.task, Task::kCycleCount);
  EXPECT_THROW(parse_train_config({{"nope", "1"}}), std::invalid_argument);
  EXPECT_THROW(parse_train_config({{"lr", "0"}}), std::invalid_argument);
  EXPECT_THROW(parse_train_config({{"beta1", "1.0"}}), std::invalid_argument);
}

TEST(TrainTask, ZeroEpochsOnlyEvaluates) {
  auto mcfg = task_model_config(Task::kShortestPath, 1, 8, 2, 4);
  auto params = model::ModelParams::init(mcfg);
  const auto before = params.decoder.weight.value;
  TrainConfig tc = tiny_train_config();
  tc.epochs = 0;
  const auto run = train_task(mcfg, tc, params);
  ASSERT_EQ(run.epochs.size(), 1u);
  EXPECT_EQ(run.epochs[0].epoch, 0u);
  EXPECT_EQ(run.epochs[0].step, 0u);
  EXPECT_TRUE(std::isfinite(run.epochs[0].eval_mae));
  EXPECT_TRUE(nn::bitwise_equal(params.decoder.weight.value, before));
}

TEST(TrainTask, DeterministicTrajectoryAndLog) {
  auto mcfg = task_model_config(Task::kCycleCount, 1, 8, 2, 4);
  auto a = model::ModelParams::init(mcfg);
  auto b = model::ModelParams::init(mcfg);
  const TrainConfig tc = tiny_train_config();
  std::ostringstream log;
  const auto ra = train_task(mcfg, tc, a, &log);
  const auto rb = train_task(mcfg, tc, b);
  const auto pa = a.collect(), pb = b.collect();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(nn::bitwise_equal(pa[i]->value, pb[i]->value)) << pa[i]->name;
  ASSERT_EQ(ra.epochs.size(), 3u);
  for (std::size_t e = 0; e < ra.epochs.size(); ++e) {
    EXPECT_EQ(ra.epochs[e].epoch, e);
    EXPECT_EQ(ra.epochs[e].eval_mae, rb.epochs[e].eval_mae);
  }
  std::istringstream in(log.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"epoch", "step", "train_loss", "val_mae", "eval_mae", "lr", "wall_s"})
      EXPECT_TRUE(j.contains(key)) << key;
    ++lines;
  }
  EXPECT_EQ(lines, 3u);
}
