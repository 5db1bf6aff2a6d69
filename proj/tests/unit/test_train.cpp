#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fd.hpp"
#include "oodkit/errors.hpp"
#include "oodkit/ops.hpp"
#include "oodkit/train.hpp"

using namespace oodkit;
using oodkit::testing::random_tensor;
using T = Tensor<double>;

namespace {

ViTConfig small_config() {
  ViTConfig c;
  c.image_size = 8;
  c.patch_size = 4;
  c.channels = 1;
  c.layers = 1;
  c.hidden_size = 8;
  c.mlp_size = 16;
  c.heads = 2;
  c.num_classes = 3;
  return c;
}

LabeledImageSet tiny_set(std::size_t per_class, std::uint64_t seed) {
  SyntheticSpec s;
  s.num_classes = 3;
  s.samples_per_class = per_class;
  s.channels = 1;
  s.image_size = 8;
  s.bumps_per_class = 1;
  s.seed = seed;
  return synthesize(s);
}

}  // namespace

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  for (std::int64_t label = 0; label < 4; ++label) {
    const std::vector<std::int64_t> l{label};
    EXPECT_NEAR(cross_entropy(T({1, 4}, {0.3, 0.3, 0.3, 0.3}), l).item(), std::log(4.0), 1e-15);
  }
}

TEST(CrossEntropy, ConfidentCorrectIsNearZero) {
  const std::vector<std::int64_t> l{0};
  EXPECT_LT(cross_entropy(T({1, 2}, {10, -10}), l).item(), 1e-4);
}

TEST(CrossEntropy, ThreeLogitExample) {
  const std::vector<std::int64_t> l{2};
  const double expected = -3 + std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  const double got = cross_entropy(T({1, 3}, {1, 2, 3}), l).item();
  EXPECT_NEAR(got, expected, 1e-14);
  EXPECT_NEAR(got, 0.40761, 1e-5);
}

TEST(CrossEntropy, StableForHugeLogits) {
  const std::vector<std::int64_t> l{1};
  const double got = cross_entropy(T({1, 2}, {1000, 0}), l).item();
  EXPECT_NEAR(got, 1000.0, 1e-9);
}

TEST(CrossEntropy, BatchMeanAndGradient) {
  const auto logits = random_tensor({4, 3}, 3, 2.0);
  const std::vector<std::int64_t> labels{0, 2, 1, 2};
  const auto rep = oodkit::testing::finite_difference_check({{"logits", logits}},
                                                            [&] { return cross_entropy(logits, labels); });
  EXPECT_LT(rep.max_rel, 1e-8) << rep.worst;
}

TEST(CrossEntropy, OutOfRangeLabel) {
  const std::vector<std::int64_t> bad{3}, neg{-1};
  EXPECT_THROW(cross_entropy(T({1, 3}, {1, 2, 3}), bad), ContractError);
  EXPECT_THROW(cross_entropy(T({1, 3}, {1, 2, 3}), neg), ContractError);
  const std::vector<std::int64_t> two{0, 1};
  EXPECT_THROW(cross_entropy(T({1, 3}, {1, 2, 3}), two), ShapeError);
}

namespace {

NamedParam<double> param(double value, double grad, bool decay = true) {
  T p({1}, {value}, true);
  p.accumulate_grad(std::vector<double>{grad});
  return {"p", p, decay};
}

}  // namespace

TEST(SgdStep, Examples) {
  auto a = param(1.0, 7.0);
  sgd_step<double>({a}, 0.0, 0.5);
  EXPECT_EQ(a.tensor.item(), 1.0);

  auto b = param(1.0, 1.0);
  sgd_step<double>({b}, 0.1, 0.0);
  EXPECT_NEAR(b.tensor.item(), 0.9, 1e-15);

  auto c = param(2.0, 0.0);
  sgd_step<double>({c}, 0.1, 0.5);
  EXPECT_NEAR(c.tensor.item(), 1.9, 1e-15);

  auto d = param(2.0, 0.0, false);
  sgd_step<double>({d}, 0.1, 0.5);
  EXPECT_EQ(d.tensor.item(), 2.0);
}

TEST(SgdStep, MissingGradientIsContractError) {
  NamedParam<double> p{"w", T({2}, {1, 2}, true), true};
  EXPECT_THROW(sgd_step<double>({p}, 0.1, 0.0), ContractError);
}

TEST(SgdStep, WeightDecayNeverIncreasesMagnitude) {
  for (unsigned seed = 0; seed < 50; ++seed) {
    auto t = random_tensor({16}, seed, 10.0, true);
    t.accumulate_grad(std::vector<double>(16, 0.0));
    const std::vector<double> before(t.data().begin(), t.data().end());
    const double lr = 0.01 * (1 + seed % 7), wd = 0.1 * (seed % 5);
    sgd_step<double>({{"t", t, true}}, lr, wd);
    for (std::size_t i = 0; i < 16; ++i) EXPECT_LE(std::abs(t.data()[i]), std::abs(before[i]));
  }
}

TEST(Sgd, ZeroMomentumMatchesSgdStep) {
  auto a = random_tensor({8}, 1, 1.0, true), b = random_tensor({8}, 1, 1.0, true);
  const auto g = oodkit::testing::random_values(8, 2);
  Sgd<double> opt({{"a", a, true}}, 0.3, 0.0);
  for (int step = 0; step < 3; ++step) {
    a.zero_grad();
    b.zero_grad();
    a.accumulate_grad(g);
    b.accumulate_grad(g);
    opt.step(0.05);
    sgd_step<double>({{"b", b, true}}, 0.05, 0.3);
  }
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
}

TEST(Sgd, HeavyBallMomentum) {
  auto p = param(1.0, 1.0);
  Sgd<double> opt({p}, 0.0, 0.9);
  opt.step(0.1);  // v = 1, p = 0.9
  EXPECT_NEAR(p.tensor.item(), 0.9, 1e-15);
  opt.step(0.1);  // v = 1.9, p = 0.71
  EXPECT_NEAR(p.tensor.item(), 0.71, 1e-15);
}

TEST(CyclicLr, Examples) {
  EXPECT_EQ(cyclic_lr(0, 100, 0.001, 0.01), 0.001);
  EXPECT_NEAR(cyclic_lr(50, 100, 0.001, 0.01), 0.01, 1e-15);
  EXPECT_NEAR(cyclic_lr(75, 100, 0.001, 0.01), 0.0055, 1e-15);
  EXPECT_NEAR(cyclic_lr(25, 100, 0.001, 0.01), 0.0055, 1e-15);
  EXPECT_THROW(cyclic_lr(100, 100, 0.001, 0.01), ContractError);
}

TEST(CyclicLr, PiecewiseLinearAndBounded) {
  for (std::size_t total : {2u, 7u, 100u, 1001u}) {
    double prev = 0;
    for (std::size_t s = 0; s < total; ++s) {
      const double lr = cyclic_lr(s, total, 0.1, 1.0);
      EXPECT_GE(lr, 0.1 - 1e-15);
      EXPECT_LE(lr, 1.0 + 1e-15);
      if (s > 0 && s <= total / 2) {
        EXPECT_GT(lr, prev);
      }
      if (s > total / 2 + 1) {
        EXPECT_LT(lr, prev);
      }
      prev = lr;
    }
  }
}

TEST(Augment, DisabledIsIdentity) {
  const auto img = tiny_set(1, 0).image(0);
  AugmentOptions off;
  off.enabled = false;
  const auto out = augment(img, 1, 8, 8, 42, off);
  EXPECT_TRUE(std::equal(out.begin(), out.end(), img.begin(), img.end()));
}

TEST(Augment, ForcedFlipIsAnInvolution) {
  const auto set = tiny_set(1, 0);
  AugmentOptions flip;
  flip.force_flip = true;
  const auto once = augment(set.image(1), 1, 8, 8, 1, flip);
  EXPECT_FALSE(std::equal(once.begin(), once.end(), set.image(1).begin()));
  EXPECT_EQ(once[0], set.image(1)[7]);
  const auto twice = augment(once, 1, 8, 8, 2, flip);
  EXPECT_TRUE(std::equal(twice.begin(), twice.end(), set.image(1).begin()));
}

TEST(Augment, DeterministicPerSeedAndShapePreserving) {
  const auto set = tiny_set(2, 3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = augment(set.image(seed % set.size()), 1, 8, 8, seed);
    const auto b = augment(set.image(seed % set.size()), 1, 8, 8, seed);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.size(), 64u);
  }
}

TEST(Augment, CropPadsWithZeros) {
  std::vector<float> ones(16, 1.0f);
  bool saw_zero = false;
  for (std::uint64_t seed = 0; seed < 50 && !saw_zero; ++seed) {
    for (float v : augment(ones, 1, 4, 4, seed)) saw_zero |= v == 0.0f;
  }
  EXPECT_TRUE(saw_zero);
}

TEST(Train, SingleSampleLossDecreases) {
  const auto c = small_config();
  const auto set = tiny_set(1, 0);
  const std::vector<std::size_t> idx{0};
  const auto x = set.batch<double>(idx);
  const std::vector<std::int64_t> y{set.labels[0]};
  auto p = ViTParams<double>::init(c, 1);
  p.set_requires_grad(true);
  std::vector<double> losses;
  for (int step = 0; step < 20; ++step) {
    p.zero_grad();
    auto loss = cross_entropy(forward(x, c, p).logits, y);
    losses.push_back(loss.item());
    loss.backward();
    sgd_step<double>(p.named(), 0.5, 0.0);
  }
  for (std::size_t i = 3; i < losses.size(); ++i) EXPECT_LT(losses[i], losses[i - 1]) << "step " << i;
  EXPECT_LT(losses.back(), losses.front());
}

TEST(Train, ReportTracksScheduleAndIsDeterministic) {
  const auto c = small_config();
  const auto data = tiny_set(6, 1), held = tiny_set(2, 2);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.seed = 9;
  tc.precision = Precision::f64;
  const auto init = ViTParams<double>::init(c, 4);
  std::size_t callbacks = 0;
  const auto a = train<double>(c, init, data, &held, tc, [&](const EpochRecord&) { ++callbacks; });
  const auto b = train<double>(c, init, data, &held, tc);
  EXPECT_EQ(callbacks, 3u);
  const std::size_t steps = 3 * ((data.size() + 3) / 4);
  ASSERT_EQ(a.report.step_lr.size(), steps);
  for (std::size_t s = 0; s < steps; ++s) EXPECT_EQ(a.report.step_lr[s], cyclic_lr(s, steps, tc.base_lr, tc.max_lr));
  EXPECT_EQ(a.report.csv(), b.report.csv());
  EXPECT_EQ(a.report.epochs.back().loss, b.report.epochs.back().loss);
  const auto na = a.last.named(), nb = b.last.named();
  for (std::size_t k = 0; k < na.size(); ++k)
    for (std::size_t i = 0; i < na[k].tensor.size(); ++i) EXPECT_EQ(na[k].tensor.data()[i], nb[k].tensor.data()[i]);
  // the init params are not modified
  EXPECT_EQ(init.head_b.data()[0], 0.0);
}

TEST(Train, BestCheckpointHasBestHeldOutAccuracy) {
  const auto c = small_config();
  const auto data = tiny_set(8, 1), held = tiny_set(4, 2);
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 8;
  tc.max_lr = 0.1;
  tc.precision = Precision::f64;
  const auto r = train<double>(c, ViTParams<double>::init(c, 5), data, &held, tc);
  double best = -1;
  for (const auto& e : r.report.epochs) best = std::max(best, e.test_acc);
  EXPECT_EQ(r.report.best_test_acc, best);
  EXPECT_EQ(evaluate_accuracy(c, r.best, held), best);
}

TEST(Train, NonFiniteLossAbortsNamingEpochAndStep) {
  const auto c = small_config();
  auto data = tiny_set(2, 1);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 2;
  tc.precision = Precision::f64;
  auto init = ViTParams<double>::init(c, 1);
  init.head_b.mutable_data()[0] = std::numeric_limits<double>::infinity();
  try {
    train<double>(c, init, data, nullptr, tc);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("step"), std::string::npos) << msg;
  }
}

TEST(TrainConfig, ValidationAndProfiles) {
  TrainConfig tc;
  EXPECT_NO_THROW(tc.validate());
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.max_lr = tc.base_lr / 2;
  EXPECT_THROW(tc.validate(), ConfigError);
  const auto full = train_profile("full");
  EXPECT_EQ(full.batch_size, 256u);
  EXPECT_EQ(full.epochs, 50u);
  EXPECT_TRUE(full.augment);
  EXPECT_EQ(train_profile("desk"), TrainConfig{});
  EXPECT_THROW(train_profile("huge"), ConfigError);
  EXPECT_EQ(TrainConfig::from_json(full.to_json()), full);
}
