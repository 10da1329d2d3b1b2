#include <gtest/gtest.h>

#include <random>

#include "panet/grad_check.hpp"
#include "panet/ops.hpp"
#include "panet/sync_bn.hpp"
#include "test_support.hpp"

using namespace panet;
using panet::testing::max_abs_diff;
using panet::testing::random_tensor;

namespace {

BNLayer make_layer(std::size_t channels, std::mt19937_64& rng) {
  BNLayer layer;
  layer.gamma = random_tensor(rng, {channels}, 0.5, 1.5);
  layer.beta = random_tensor(rng, {channels});
  layer.running_mean = Tensor::zeros({channels});
  layer.running_var = Tensor::full({channels}, 1.0);
  return layer;
}

BNLayer copy_layer(const BNLayer& l) {
  BNLayer c = l;
  c.gamma = l.gamma.clone();
  c.beta = l.beta.clone();
  c.gamma.set_requires_grad(true);
  c.beta.set_requires_grad(true);
  c.running_mean = l.running_mean.clone();
  c.running_var = l.running_var.clone();
  return c;
}

// Plain whole-batch moments, one pass over [N,C,...] per channel.
void oracle_moments(const Tensor& x, std::vector<double>& mean, std::vector<double>& var) {
  const std::size_t n = x.dim(0), c = x.dim(1), inner = x.size() / (n * c);
  mean.assign(c, 0.0);
  var.assign(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    long double s = 0, ss = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < inner; ++k) s += x.data()[(i * c + ch) * inner + k];
    const long double m = s / (n * inner);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < inner; ++k) {
        const long double d = x.data()[(i * c + ch) * inner + k] - m;
        ss += d * d;
      }
    mean[ch] = static_cast<double>(m);
    var[ch] = static_cast<double>(ss / (n * inner));
  }
}

struct RunResult {
  std::vector<double> out, dx, dgamma, dbeta, running_mean, running_var;
};

RunResult run_sharded(const Tensor& x_in, const BNLayer& proto, std::vector<std::size_t> rows,
                      const std::vector<double>& upstream) {
  BNLayer layer = copy_layer(proto);
  Tensor x = x_in.clone();
  x.set_requires_grad(true);
  Tensor y = sync_batch_norm(x, layer, rows, BNMode::kTrain);
  y.backward(upstream);
  RunResult r;
  r.out.assign(y.data().begin(), y.data().end());
  r.dx.assign(x.grad().begin(), x.grad().end());
  r.dgamma.assign(layer.gamma.grad().begin(), layer.gamma.grad().end());
  r.dbeta.assign(layer.beta.grad().begin(), layer.beta.grad().end());
  r.running_mean.assign(layer.running_mean.data().begin(), layer.running_mean.data().end());
  r.running_var.assign(layer.running_var.data().begin(), layer.running_var.data().end());
  return r;
}

}  // namespace

TEST(ShardedBatch, SplitReconstructs) {
  std::mt19937_64 rng(1);
  Tensor x = random_tensor(rng, {8, 3, 2, 2}, -1, 1, false);
  const std::vector<std::size_t> rows = {3, 1, 4};
  ShardedBatch b = ShardedBatch::split(x, rows);
  EXPECT_EQ(b.total_rows(), 8u);
  EXPECT_EQ(max_abs_diff(concat0(b.shards).data(), x.data()), 0.0);
  const std::vector<std::size_t> empty = {4, 0, 4};
  EXPECT_THROW(ShardedBatch::split(x, empty), ContractError);
  EXPECT_EQ(ShardedBatch::split_even(x, 3).shards[0].dim(0), 3u);
}

TEST(AllReduce, SingleShardEqualsWholeBatch) {
  std::mt19937_64 rng(2);
  Tensor x = random_tensor(rng, {5, 4, 3, 3}, -2, 3, false);
  std::vector<double> mean, var;
  oracle_moments(x, mean, var);
  const auto m = allreduce_moments(ShardedBatch::split_even(x, 1));
  EXPECT_LT(max_abs_diff(m.mean, mean), 1e-12);
  EXPECT_LT(max_abs_diff(m.variance, var), 1e-12);
  EXPECT_EQ(m.count, 45u);
}

TEST(AllReduce, ConstantInput) {
  Tensor x = Tensor::full({4, 2, 3}, 1.5);
  const auto m = allreduce_moments(ShardedBatch::split_even(x, 2));
  for (double v : m.mean) EXPECT_DOUBLE_EQ(v, 1.5);
  for (double v : m.variance) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(AllReduce, ShardCountAndSizesDoNotMatter) {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor(rng, {8, 3, 4, 4}, -1, 2, false);
  std::vector<double> mean, var;
  oracle_moments(x, mean, var);
  const std::vector<std::vector<std::size_t>> partitions = {{4, 4}, {2, 2, 2, 2}, {1, 7}, {5, 1, 1, 1}};
  for (const auto& rows : partitions) {
    const auto m = allreduce_moments(ShardedBatch::split(x, rows));
    EXPECT_LT(max_abs_diff(m.mean, mean), 1e-6);
    EXPECT_LT(max_abs_diff(m.variance, var), 1e-6);
  }
}

TEST(AllReduce, ChannelMismatchThrows) {
  ShardedBatch b;
  b.shards = {Tensor::zeros({1, 2, 2}), Tensor::zeros({1, 3, 2})};
  EXPECT_THROW(allreduce_moments(b), ContractError);
}

TEST(SyncBNForward, ConstantInputGivesBeta) {
  std::mt19937_64 rng(4);
  BNLayer layer = make_layer(2, rng);
  for (double& g : layer.gamma.mutable_data()) g = 1.0;
  for (double& b : layer.beta.mutable_data()) b = 0.0;
  const auto f = syncbn_forward(ShardedBatch::split_even(Tensor::full({4, 2, 3, 3}, 7.0), 2), layer, BNMode::kTrain);
  for (double v : f.output) EXPECT_EQ(v, 0.0);
}

TEST(SyncBNForward, AffineOnStandardizedInput) {
  // Columns of +-1 give mean 0 and variance 1 in each channel.
  std::vector<double> v;
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 6; ++k) v.push_back(((i + k) % 2 == 0) ? 1.0 : -1.0);
  Tensor x = Tensor::from({4, 1, 6}, v);
  BNLayer layer;
  layer.gamma = Tensor::full({1}, 2.0);
  layer.beta = Tensor::full({1}, 3.0);
  layer.running_mean = Tensor::zeros({1});
  layer.running_var = Tensor::full({1}, 1.0);
  const auto f = syncbn_forward(ShardedBatch::split_even(x, 2), layer, BNMode::kTrain);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(f.output[i], 2.0 * v[i] + 3.0, 1e-4);
}

TEST(SyncBNForward, NormalizedMomentsBeforeAffine) {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor(rng, {6, 3, 4, 4}, -3, 5, false);
  BNLayer layer = make_layer(3, rng);
  for (double& g : layer.gamma.mutable_data()) g = 1.0;
  for (double& b : layer.beta.mutable_data()) b = 0.0;
  const auto f = syncbn_forward(ShardedBatch::split_even(x, 3), layer, BNMode::kTrain);
  std::vector<double> mean, var;
  oracle_moments(Tensor::from(x.shape(), f.output), mean, var);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(mean[c], 0.0, 1e-5);
    EXPECT_NEAR(var[c], 1.0, 1e-5);
  }
}

TEST(SyncBNForward, ChannelMismatchThrows) {
  std::mt19937_64 rng(6);
  BNLayer layer = make_layer(3, rng);
  EXPECT_THROW(syncbn_forward(ShardedBatch::split_even(Tensor::zeros({2, 2, 2}), 1), layer, BNMode::kTrain),
               ContractError);
}

TEST(SyncBNForward, RunningStatsUseMomentum) {
  std::mt19937_64 rng(7);
  Tensor x = random_tensor(rng, {4, 2, 3}, -1, 3, false);
  BNLayer layer = make_layer(2, rng);
  syncbn_forward(ShardedBatch::split_even(x, 2), layer, BNMode::kTrain);
  std::vector<double> mean, var;
  oracle_moments(x, mean, var);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_NEAR(layer.running_mean.data()[c], 0.1 * mean[c], 1e-12);
    EXPECT_NEAR(layer.running_var.data()[c], 0.9 + 0.1 * var[c], 1e-12);
    EXPECT_GE(layer.running_var.data()[c], 0.0);
  }
}

TEST(SyncBNForward, EvalModeIsPerElement) {
  std::mt19937_64 rng(8);
  BNLayer layer = make_layer(2, rng);
  for (double& m : layer.running_mean.mutable_data()) m = 0.3;
  Tensor x = random_tensor(rng, {4, 2, 3}, -1, 1, false);
  const auto a = syncbn_forward(ShardedBatch::split_even(x, 1), layer, BNMode::kEval);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  const auto b = syncbn_forward(ShardedBatch::split_even(take_rows(x, perm), 2), layer, BNMode::kEval);
  EXPECT_EQ(max_abs_diff(b.output, take_rows(Tensor::from(x.shape(), a.output), perm).data()), 0.0);
}

TEST(SyncBNBackward, MissingCacheThrows) {
  std::mt19937_64 rng(9);
  BNLayer layer = make_layer(2, rng);
  SyncBNCache cache;
  const std::vector<double> up(4, 1.0);
  EXPECT_THROW(syncbn_backward(up, cache, layer), ContractError);
}

TEST(SyncBNBackward, BetaGradientIsChannelSum) {
  std::mt19937_64 rng(10);
  Tensor x = random_tensor(rng, {4, 3, 5, 5}, -1, 1, false);
  BNLayer layer = make_layer(3, rng);
  const auto f = syncbn_forward(ShardedBatch::split_even(x, 2), layer, BNMode::kTrain);
  std::vector<double> up(x.size());
  std::uniform_real_distribution<double> u(-1, 1);
  for (double& v : up) v = u(rng);
  const auto g = syncbn_backward(up, f.cache, layer);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t k = 0; k < 25; ++k) s += up[(i * 3 + c) * 25 + k];
    EXPECT_NEAR(g.beta[c], s, 1e-12);
  }
}

TEST(SyncBNBackward, FiniteDifferenceTwoShards) {
  std::mt19937_64 rng(11);
  BNLayer layer = make_layer(3, rng);
  layer.gamma.set_requires_grad(true);
  layer.beta.set_requires_grad(true);
  const std::vector<std::size_t> rows = {2, 2};
  auto report = grad_check(
      [&](const std::vector<Tensor>& in) { return sync_batch_norm(in[0], layer, rows, BNMode::kTrain); },
      {random_tensor(rng, {4, 3, 5, 5}), layer.gamma, layer.beta});
  EXPECT_TRUE(report.passed) << report.worst;
}

TEST(SyncBN, ShardInvarianceForwardRunningStatsAndGradients) {
  std::mt19937_64 rng(12);
  Tensor x = random_tensor(rng, {8, 3, 4, 4}, -2, 2, false);
  BNLayer proto = make_layer(3, rng);
  std::vector<double> up(x.size());
  std::uniform_real_distribution<double> u(-1, 1);
  for (double& v : up) v = u(rng);
  const RunResult one = run_sharded(x, proto, {8}, up);
  for (const auto& rows : std::vector<std::vector<std::size_t>>{{4, 4}, {2, 2, 2, 2}, {3, 5}, {1, 2, 3, 2}}) {
    const RunResult many = run_sharded(x, proto, rows, up);
    EXPECT_LT(max_abs_diff(one.out, many.out), 1e-6);
    EXPECT_LT(max_abs_diff(one.dx, many.dx), 1e-6);
    EXPECT_LT(max_abs_diff(one.dgamma, many.dgamma), 1e-6);
    EXPECT_LT(max_abs_diff(one.dbeta, many.dbeta), 1e-6);
    EXPECT_LT(max_abs_diff(one.running_mean, many.running_mean), 1e-6);
    EXPECT_LT(max_abs_diff(one.running_var, many.running_var), 1e-6);
  }
}
