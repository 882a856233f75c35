#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "expressivity/statnet.hpp"

using namespace expressivity;

namespace {

using Net = StatisticsNetwork<double>;

MatrixOf<double> random_inputs(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  CounterRng rng(seed);
  MatrixOf<double> x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

std::vector<double> flatten(NetworkTensors<double> t) {
  std::vector<double> v;
  t.for_each_scalar([&](double& p) { v.push_back(p); });
  return v;
}

double summed_output(const Net& net, const MatrixOf<double>& x) {
  ForwardCache<double> c;
  net.forward(x, c);
  return c.output.sum();
}

}  // namespace

TEST(Elu, KnownValues) {
  EXPECT_EQ(elu(0.0), 0.0);
  EXPECT_EQ(elu(1.0), 1.0);
  EXPECT_NEAR(elu(-1.0), std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_NEAR(elu(-1.0), -0.63212, 1e-5);
}

TEST(Xavier, VarianceMatchesFanFormula) {
  CounterRng rng(1);
  const auto w = xavier_init<double>(512, 512, rng);
  const double mean = w.mean();
  const double var = (w.array() - mean).square().sum() / static_cast<double>(w.size() - 1);
  const double expected = 2.0 / (512 + 512);
  EXPECT_NEAR(var, expected, 0.1 * expected);
  EXPECT_NEAR(mean, 0.0, 5.0 * std::sqrt(expected / static_cast<double>(w.size())));
}

TEST(Xavier, DegenerateFanAndDeterminism) {
  CounterRng rng(9);
  const auto one = xavier_init<double>(1, 1, rng);
  EXPECT_TRUE(std::isfinite(one(0, 0)));
  CounterRng a(42), b(42);
  EXPECT_EQ(xavier_init<double>(17, 5, a), xavier_init<double>(17, 5, b));
}

TEST(Xavier, BiasesStartAtZero) {
  CounterRng rng(3);
  Net net(NetworkShape{4, 16, 8}, rng);
  EXPECT_TRUE(net.parameters().b1.isZero());
  EXPECT_TRUE(net.parameters().b2.isZero());
  EXPECT_EQ(net.parameters().b3, 0.0);
}

TEST(Forward, ZeroNetworkOutputsZero) {
  Net net(NetworkShape{3});
  const auto x = random_inputs(5, 3, 1);
  ForwardCache<double> c;
  net.forward(x, c);
  EXPECT_TRUE(c.output.isZero());
}

TEST(Forward, OutputBiasOnlyNetwork) {
  Net net(NetworkShape{3});
  net.mutable_parameters().b3 = 2.5;
  const auto x = random_inputs(4, 3, 2);
  ForwardCache<double> c;
  net.forward(x, c);
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_EQ(c.output[i], 2.5);
}

TEST(Forward, HandSizedUnitNetwork) {
  Net net(NetworkShape{1, 1, 1});
  auto& p = net.mutable_parameters();
  p.w1(0, 0) = 1;
  p.w2(0, 0) = 1;
  p.w3[0] = 1;
  const std::vector<double> x{2.0};
  // elu(elu(2)) with the identity branch twice.
  EXPECT_EQ(net(std::span<const double>(x)), elu(elu(2.0)));
  EXPECT_EQ(net(std::span<const double>(x)), 2.0);
}

TEST(Forward, DimensionMismatch) {
  Net net(NetworkShape{3, 4, 2});
  ForwardCache<double> c;
  try {
    net.forward(random_inputs(2, 5, 1), c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  CounterRng rng(5);
  Net net(NetworkShape{5, 8, 4}, rng);
  const auto x = random_inputs(6, 5, 3);
  ForwardCache<double> c;
  net.forward(x, c);
  for (double g : flatten(net.backward(c, VectorOf<double>::Zero(6)))) EXPECT_EQ(g, 0.0);
}

TEST(Backward, MatchesCentralDifferences) {
  CounterRng rng(11);
  Net net(NetworkShape{5, 8, 4}, rng);
  net.mutable_parameters().for_each_scalar([&](double& p) {
    if (p == 0.0) p = 0.2 * rng.normal();
  });
  const auto x = random_inputs(7, 5, 4);
  ForwardCache<double> c;
  net.forward(x, c);
  const auto analytic = flatten(net.backward(c, VectorOf<double>::Ones(7)));

  const double h = 1e-5;
  std::vector<double*> slots;
  net.mutable_parameters().for_each_scalar([&](double& p) { slots.push_back(&p); });
  std::size_t agree = 0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const double saved = *slots[k];
    *slots[k] = saved + h;
    const double up = summed_output(net, x);
    *slots[k] = saved - h;
    const double down = summed_output(net, x);
    *slots[k] = saved;
    const double numeric = (up - down) / (2 * h);
    const double rel = std::abs(numeric - analytic[k]) / std::max({std::abs(numeric), std::abs(analytic[k]), 1e-6});
    agree += rel <= 1e-4;
  }
  EXPECT_GE(static_cast<double>(agree), 0.99 * static_cast<double>(slots.size()));
}

TEST(Backward, DuplicatedSampleDoublesContribution) {
  CounterRng rng(12);
  Net net(NetworkShape{3, 6, 4}, rng);
  const auto one = random_inputs(1, 3, 8);
  MatrixOf<double> two(2, 3);
  two.row(0) = one.row(0);
  two.row(1) = one.row(0);
  ForwardCache<double> c1, c2;
  net.forward(one, c1);
  const auto g1 = flatten(net.backward(c1, VectorOf<double>::Ones(1)));
  net.forward(two, c2);
  const auto g2 = flatten(net.backward(c2, VectorOf<double>::Ones(2)));
  for (std::size_t k = 0; k < g1.size(); ++k) EXPECT_NEAR(g2[k], 2.0 * g1[k], 1e-12 * (1 + std::abs(g1[k])));
}

TEST(Backward, StaleCacheRejected) {
  CounterRng rng(13);
  Net net(NetworkShape{2, 4, 2}, rng);
  ForwardCache<double> c;
  net.forward(random_inputs(3, 2, 1), c);
  net.mutable_parameters().b3 += 1.0;
  try {
    net.backward(c, VectorOf<double>::Ones(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StaleCache);
  }
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  CounterRng rng(14);
  Net net(NetworkShape{2, 4, 2}, rng);
  TrainerConfig cfg;
  auto g = NetworkTensors<double>::zeros(net.shape());
  g.b3 = 1.0;
  net.adam_step(g, cfg);
  const auto before = net.parameters();
  const double m_before = net.first_moment().b3;
  const double v_before = net.second_moment().b3;
  net.adam_step(NetworkTensors<double>::zeros(net.shape()), cfg);
  EXPECT_TRUE(net.parameters().w1 == before.w1);
  EXPECT_EQ(net.step_count(), 2);
  EXPECT_NEAR(net.first_moment().b3, cfg.adam_beta1 * m_before, 1e-15);
  EXPECT_NEAR(net.second_moment().b3, cfg.adam_beta2 * v_before, 1e-15);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Net net(NetworkShape{1, 1, 1});
  auto g = NetworkTensors<double>::zeros(net.shape());
  g.b3 = 1.0;
  TrainerConfig cfg;
  net.adam_step(g, cfg);
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  const double expected = -cfg.learning_rate * 1.0 / (1.0 + cfg.adam_epsilon);
  EXPECT_NEAR(net.parameters().b3, expected, 1e-15);
  EXPECT_NEAR(net.parameters().b3, -cfg.learning_rate, 1e-9);
}

TEST(Adam, NonFiniteGradientRejected) {
  Net net(NetworkShape{1, 1, 1});
  auto g = NetworkTensors<double>::zeros(net.shape());
  g.w1(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    net.adam_step(g, TrainerConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteGradient);
  }
}

TEST(Adam, IdenticalSeedsGiveIdenticalTrajectories) {
  auto run = [] {
    CounterRng rng(77);
    Net net(NetworkShape{3, 8, 4}, rng);
    const auto x = random_inputs(10, 3, 5);
    for (int k = 0; k < 25; ++k) {
      ForwardCache<double> c;
      net.forward(x, c);
      net.adam_step(net.backward(c, VectorOf<double>::Constant(10, 0.1)), TrainerConfig{});
    }
    return net.parameters();
  };
  EXPECT_TRUE(run() == run());
}

TEST(TrainerConfig, BatchBounds) {
  TrainerConfig cfg;
  EXPECT_NO_THROW(cfg.validate(100));
  try {
    cfg.validate(99);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BatchTooLarge);
  }
  cfg.batch_size = 1;
  EXPECT_THROW(cfg.validate(100), Error);
}

TEST(StatisticsNetwork, DefaultWidths) {
  const NetworkShape s{9};
  EXPECT_EQ(s.hidden1, 512);
  EXPECT_EQ(s.hidden2, 128);
  CounterRng rng(1);
  Net net(s, rng);
  EXPECT_EQ(net.parameters().w1.rows(), 9);
  EXPECT_EQ(net.parameters().w1.cols(), 512);
  EXPECT_EQ(net.parameters().w2.cols(), 128);
  EXPECT_EQ(net.parameters().w3.size(), 128);
}
