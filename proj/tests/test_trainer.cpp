#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "stereoae/dataio.hpp"
#include "stereoae/errors.hpp"
#include "stereoae/trainer.hpp"

using namespace stereoae;

namespace {

std::vector<NamedParameter<double>> one_param(std::vector<double> values) {
  const int n = static_cast<int>(values.size());
  Tensor<double> t(Shape{n}, std::move(values));
  t.set_requires_grad(true);
  return {{"x", t}};
}

std::vector<StereoSample> small_scenes(int count, std::uint64_t seed = 3) {
  std::vector<StereoSample> out;
  for (const auto& spec : scene_family({}, count, seed)) out.push_back(synthesize_pair(spec));
  return out;
}

std::vector<double> flat_params(const Network<double>& net) {
  std::vector<double> out;
  for (const auto& p : net.parameters()) out.insert(out.end(), p.value.data().begin(), p.value.data().end());
  return out;
}

OptimizerConfig quick_optimizer() {
  OptimizerConfig c;
  c.batch_size = 2;
  return c;
}

}  // namespace

TEST(LrSchedule, ClosedForm) {
  EXPECT_DOUBLE_EQ(lr_schedule(0.01, 1, 0.0005), 0.01);
  EXPECT_NEAR(lr_schedule(0.01, 2, 0.0005), 0.01 / 1.001, 1e-15);
  EXPECT_NEAR(lr_schedule(0.01, 100, 0.0005), 0.01 * std::pow(1.05, -99), 1e-15);
  double prev = lr_schedule(0.01, 1, 0.0005);
  for (int n = 2; n < 300; ++n) {
    const double cur = lr_schedule(0.01, n, 0.0005);
    EXPECT_LE(cur, prev);
    prev = cur;
  }
  EXPECT_THROW(lr_schedule(0.01, 0, 0.0005), UsageError);
}

TEST(Sgd, PlainGradientStep) {
  auto p = one_param({1.0, -2.0});
  p[0].value.grad()[0] = 0.5;
  p[0].value.grad()[1] = -1.0;
  std::vector<Tensor<double>> v{Tensor<double>(Shape{2})};
  OptimizerConfig c;
  c.momentum = 0;
  c.weight_decay = 0;
  sgd_step(p, v, c, 0.1);
  EXPECT_DOUBLE_EQ(p[0].value.data()[0], 1.0 - 0.05);
  EXPECT_DOUBLE_EQ(p[0].value.data()[1], -2.0 + 0.1);
}

TEST(Sgd, VelocityDecaysGeometricallyWithoutGradient) {
  auto p = one_param({0.0});
  std::vector<Tensor<double>> v{Tensor<double>(Shape{1}, 1.0)};
  OptimizerConfig c;
  c.weight_decay = 0;
  sgd_step(p, v, c, 0.1);
  EXPECT_DOUBLE_EQ(v[0].data()[0], 0.9);
  sgd_step(p, v, c, 0.1);
  EXPECT_DOUBLE_EQ(v[0].data()[0], 0.9 * 0.9);
  EXPECT_DOUBLE_EQ(p[0].value.data()[0], 0.9 + 0.81);
}

TEST(Sgd, ZeroLearningRateIsIdentity) {
  auto p = one_param({1.5, -0.25});
  p[0].value.grad()[0] = 3;
  std::vector<Tensor<double>> v{Tensor<double>(Shape{2})};
  sgd_step(p, v, OptimizerConfig{}, 0.0);
  EXPECT_EQ(p[0].value.data()[0], 1.5);
  EXPECT_EQ(p[0].value.data()[1], -0.25);
}

TEST(Sgd, WeightDecayAloneShrinksByOneMinusLrWd) {
  auto p = one_param({2.0, -3.0});
  std::vector<Tensor<double>> v{Tensor<double>(Shape{2})};
  const OptimizerConfig c;
  sgd_step(p, v, c, 0.01);
  EXPECT_NEAR(p[0].value.data()[0], 2.0 * (1 - 0.01 * c.weight_decay), 1e-10);
  EXPECT_NEAR(p[0].value.data()[1], -3.0 * (1 - 0.01 * c.weight_decay), 1e-10);
}

TEST(Sgd, QuadraticBowlConverges) {
  auto p = one_param({1.0, -0.7, 0.3});
  std::vector<Tensor<double>> v{Tensor<double>(Shape{3})};
  OptimizerConfig c;
  c.momentum = 0;
  c.weight_decay = 0;
  for (int step = 0; step < 200; ++step) {
    for (int i = 0; i < 3; ++i) p[0].value.grad()[i] = 2 * p[0].value.data()[i];
    sgd_step(p, v, c, 0.1);
  }
  for (double x : p[0].value.data()) EXPECT_LT(std::abs(x), 1e-6);
}

TEST(Sgd, RejectsNonFiniteUpdate) {
  auto p = one_param({1.0});
  p[0].value.grad()[0] = std::numeric_limits<double>::infinity();
  std::vector<Tensor<double>> v{Tensor<double>(Shape{1})};
  EXPECT_THROW(sgd_step(p, v, OptimizerConfig{}, 0.1), NumericError);
}

TEST(OptimizerConfig, Validation) {
  OptimizerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.weight_decay = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Trainer, ConstantImagesKeepZeroDisparity) {
  StereoSample s;
  s.id = "flat";
  s.left = Tensor<double>(Shape{1, 64, 192}, 0.1);
  s.right = Tensor<double>(Shape{1, 64, 192}, 0.1);
  s.calibration = {200, 0.54};
  Network<double> net(NetworkConfig::make(Profile::desk), 1);
  TrainState<double> state(1);
  const StagePlan plan{0, {}, 5, 0.01};
  train_stage(net, {s, s}, plan, quick_optimizer(), TrainOptions<double>{}, state);
  const auto d = predict_disparity(net, s);
  for (double v : d.values()) ASSERT_EQ(v, 0.0);
}

TEST(Trainer, LossDecreasesOnSyntheticScenes) {
  const auto data = small_scenes(4);
  Network<double> net(NetworkConfig::make(Profile::desk), 2);
  TrainState<double> state(2);
  OptimizerConfig c;
  c.batch_size = 1;
  const auto rec = train_stage(net, data, StagePlan{0, {}, 12, 0.01}, c, TrainOptions<double>{}, state);
  ASSERT_EQ(rec.size(), 12u);
  EXPECT_LT(rec.back().total, rec.front().total);
  // Loss curve is non-increasing up to 5% transients.
  double best = rec.front().total;
  for (const auto& r : rec) {
    EXPECT_LE(r.total, 1.05 * best) << "epoch " << r.epoch;
    best = std::min(best, r.total);
  }
  for (const auto& r : rec) EXPECT_DOUBLE_EQ(r.total, r.recons + 0.01 * r.smooth);
}

TEST(Trainer, LearningRatePerEpochAndStage) {
  const auto data = small_scenes(2);
  const auto cfg = NetworkConfig::make(Profile::desk);
  Network<double> net(cfg, 3);
  TrainState<double> state(3);
  const auto schedule = make_schedule(cfg, 1, 3, 2, 0.01, 4.0);
  train_schedule(net, data, schedule, quick_optimizer(), TrainOptions<double>{}, state);
  ASSERT_EQ(state.history.size(), 5u);
  EXPECT_EQ(net.active_stages(), 1);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(state.history[i].lr, lr_schedule(0.01, i + 1, 0.0005));
  for (int i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(state.history[3 + i].lr, lr_schedule(0.0025, i + 1, 0.0005));
  EXPECT_EQ(state.history[3].stage, 1);
  EXPECT_EQ(state.history[3].phase, 1);
}

TEST(Trainer, GlobalDecayIndexOption) {
  const auto data = small_scenes(2);
  const auto cfg = NetworkConfig::make(Profile::desk);
  Network<double> net(cfg, 3);
  TrainState<double> state(3);
  auto opt = quick_optimizer();
  opt.reset_decay_per_stage = false;
  train_schedule(net, data, make_schedule(cfg, 1, 2, 2, 0.01, 4.0), opt, TrainOptions<double>{}, state);
  EXPECT_DOUBLE_EQ(state.history[2].lr, lr_schedule(0.0025, 3, 0.0005));
  EXPECT_DOUBLE_EQ(state.history[3].lr, lr_schedule(0.0025, 4, 0.0005));
}

TEST(Trainer, DeterministicAcrossRunsAndThreadCounts) {
  const auto data = small_scenes(4);
  const auto cfg = NetworkConfig::make(Profile::desk);
  const auto run = [&](int threads) {
    Network<double> net(cfg, 11);
    TrainState<double> state(11);
    TrainOptions<double> o;
    o.threads = threads;
    OptimizerConfig c;
    c.batch_size = 4;
    train_schedule(net, data, make_schedule(cfg, 1, 2, 1, 0.01, 4.0), c, o, state);
    return std::pair{flat_params(net), state.history};
  };
  const auto a = run(1), b = run(1), c = run(3);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.first, c.first);
  ASSERT_EQ(a.second.size(), c.second.size());
  for (std::size_t i = 0; i < a.second.size(); ++i) EXPECT_EQ(a.second[i].total, c.second[i].total);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  const auto data = small_scenes(3);
  const auto cfg = NetworkConfig::make(Profile::desk);
  const auto schedule = make_schedule(cfg, 1, 3, 2, 0.01, 4.0);

  Network<double> full(cfg, 5);
  TrainState<double> full_state(5);
  std::optional<Network<double>> snap_net;
  std::optional<TrainState<double>> snap_state;
  TrainOptions<double> o;
  o.on_epoch_end = [&](const Network<double>& n, const TrainState<double>& s) {
    if (s.phase == 0 && s.epoch == 2) {
      snap_net = n.clone();
      snap_state = s;
      for (auto& v : snap_state->velocity) v = v.clone();
    }
  };
  train_schedule(full, data, schedule, quick_optimizer(), o, full_state);
  ASSERT_TRUE(snap_net && snap_state);

  train_schedule(*snap_net, data, schedule, quick_optimizer(), TrainOptions<double>{}, *snap_state);
  EXPECT_EQ(flat_params(*snap_net), flat_params(full));
  ASSERT_EQ(snap_state->history.size(), full_state.history.size());
  for (std::size_t i = 0; i < full_state.history.size(); ++i)
    EXPECT_EQ(snap_state->history[i].total, full_state.history[i].total);
}

TEST(Trainer, DivergenceDetectorAborts) {
  const auto data = small_scenes(2);
  Network<double> net(NetworkConfig::make(Profile::desk), 4);
  TrainState<double> state(4);
  TrainOptions<double> o;
  // Every epoch that fails to halve the best loss counts as a strike.
  o.divergence_factor = 0.5;
  o.divergence_patience = 3;
  EXPECT_THROW(train_stage(net, data, StagePlan{0, {}, 10, 1e-6}, quick_optimizer(), o, state), DivergenceError);
  EXPECT_EQ(state.epoch, 3);
}

TEST(Trainer, StagePlanMustMatchNetwork) {
  Network<double> net(NetworkConfig::make(Profile::desk), 4);
  TrainState<double> state(4);
  EXPECT_THROW(train_stage(net, small_scenes(1), StagePlan{1, {}, 1, 0.01}, quick_optimizer(), TrainOptions<double>{},
                           state),
               UsageError);
}

TEST(Trainer, LossCsvColumns) {
  std::ostringstream out;
  write_loss_csv(out, {EpochRecord{0, 0, 1, 0.01, 0.5, 0.25, 0.5025}});
  const auto text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "epoch,stage,lr,recons,smooth,total,phase");
  EXPECT_NE(text.find("1,0,0.01"), std::string::npos);
}

TEST(Trainer, FinetuneWithIdentityLikeDataRuns) {
  const auto data = small_scenes(1);
  const auto cfg = NetworkConfig::make(Profile::desk);
  Network<double> net(cfg, 6);
  TrainState<double> state(6);
  auto opt = quick_optimizer();
  opt.batch_size = 8;
  train_schedule(net, data, make_schedule(cfg, 0, 1, 1, 0.01, 4.0), opt, TrainOptions<double>{}, state, 1);
  ASSERT_EQ(state.history.size(), 2u);
  EXPECT_EQ(state.history[1].phase, 1);
  EXPECT_TRUE(std::isfinite(state.history[1].total));
}
