#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "panet/grad_check.hpp"
#include "panet/ops.hpp"
#include "panet/tensor.hpp"
#include "test_support.hpp"

using namespace panet;
using panet::testing::max_abs_diff;
using panet::testing::random_tensor;

namespace {

// Direct 7-loop convolution, used as the forward oracle.
std::vector<double> naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const long n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const long cout = w.dim(0), k = w.dim(2);
  const long oh = (h + 2 * static_cast<long>(pad) - k) / static_cast<long>(stride) + 1;
  const long ow = (wd + 2 * static_cast<long>(pad) - k) / static_cast<long>(stride) + 1;
  std::vector<double> out;
  for (long i = 0; i < n; ++i)
    for (long o = 0; o < cout; ++o)
      for (long oy = 0; oy < oh; ++oy)
        for (long ox = 0; ox < ow; ++ox) {
          double acc = b.defined() ? b.data()[o] : 0.0;
          for (long c = 0; c < cin; ++c)
            for (long ky = 0; ky < k; ++ky)
              for (long kx = 0; kx < k; ++kx) {
                const long iy = oy * static_cast<long>(stride) + ky - static_cast<long>(pad);
                const long ix = ox * static_cast<long>(stride) + kx - static_cast<long>(pad);
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += x.at({std::size_t(i), std::size_t(c), std::size_t(iy), std::size_t(ix)}) *
                       w.at({std::size_t(o), std::size_t(c), std::size_t(ky), std::size_t(kx)});
              }
          out.push_back(acc);
        }
  return out;
}

}  // namespace

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t = Tensor::zeros({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(numel(t.shape()), t.data().size());
  EXPECT_THROW(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), ContractError);
}

TEST(Tensor, GradientHasDataShape) {
  std::mt19937_64 rng(1);
  Tensor x = random_tensor(rng, {2, 5});
  Tensor y = sum(relu(x));
  y.backward();
  ASSERT_TRUE(x.has_grad());
  EXPECT_EQ(x.grad().size(), x.size());
}

TEST(Tensor, NoGradGuardRecordsNothing) {
  std::mt19937_64 rng(2);
  Tensor x = random_tensor(rng, {3});
  NoGradGuard guard;
  Tensor y = scale(x, 2.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Tensor, GraphNodesRejectInPlaceWrites) {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor(rng, {3});
  Tensor y = scale(x, 2.0);
  EXPECT_THROW(y.mutable_data(), ContractError);
}

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 rng(4);
  Tensor x = random_tensor(rng, {1, 1, 4, 4});
  Tensor w = Tensor::full({1, 1, 1, 1}, 1.0);
  Tensor b = Tensor::zeros({1});
  Tensor y = conv2d(x, w, b, 1, 0);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(max_abs_diff(y.data(), x.data()), 0.0);
}

TEST(Conv2d, StrideTwoHalvesWithCeil) {
  for (std::size_t h : {7u, 8u, 9u}) {
    Tensor x = Tensor::zeros({1, 2, h, h + 1});
    Tensor y = conv2d(x, Tensor::zeros({3, 2, 3, 3}), Tensor(), 2, 1);
    EXPECT_EQ(y.dim(2), (h + 1) / 2);
    EXPECT_EQ(y.dim(3), (h + 2) / 2);
  }
}

TEST(Conv2d, SamePaddingPreservesShape) {
  for (std::size_t k : {1u, 3u, 5u}) {
    Tensor y = conv2d(Tensor::zeros({1, 2, 6, 5}), Tensor::zeros({2, 2, k, k}), Tensor(), 1, (k - 1) / 2);
    EXPECT_EQ(y.dim(2), 6u);
    EXPECT_EQ(y.dim(3), 5u);
  }
}

TEST(Conv2d, MatchesNaiveLoops) {
  std::mt19937_64 rng(5);
  for (std::size_t stride : {1u, 2u}) {
    Tensor x = random_tensor(rng, {2, 3, 7, 6});
    Tensor w = random_tensor(rng, {4, 3, 3, 3});
    Tensor b = random_tensor(rng, {4});
    EXPECT_LT(max_abs_diff(conv2d(x, w, b, stride, 1).data(), naive_conv(x, w, b, stride, 1)), 1e-12);
  }
}

TEST(Conv2d, ContractViolations) {
  EXPECT_THROW(conv2d(Tensor::zeros({1, 3, 4, 4}), Tensor::zeros({2, 2, 3, 3}), Tensor(), 1, 1), ContractError);
  EXPECT_THROW(conv2d(Tensor::zeros({1, 3, 4, 4}), Tensor::zeros({2, 3, 3, 3}), Tensor(), 0, 1), ContractError);
}

TEST(Conv2d, GradCheck) {
  std::mt19937_64 rng(6);
  auto report = grad_check([](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], 1, 1); },
                           {random_tensor(rng, {2, 3, 8, 8}), random_tensor(rng, {4, 3, 3, 3}), random_tensor(rng, {4})});
  EXPECT_TRUE(report.passed) << report.worst;
  EXPECT_LE(report.max_rel_error, 1e-4);
}

TEST(Conv2d, PlainSumGradCheck) {
  std::mt19937_64 rng(7);
  GradCheckOptions opts;
  opts.projection_seed = 0;
  auto report = grad_check([](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], 2, 1); },
                           {random_tensor(rng, {2, 3, 8, 8}), random_tensor(rng, {4, 3, 3, 3}), random_tensor(rng, {4})},
                           opts);
  EXPECT_TRUE(report.passed) << report.worst;
}

TEST(ConvTranspose2d, DoublesSpatialSize) {
  Tensor y = conv_transpose2d(Tensor::zeros({1, 8, 14, 14}), Tensor::zeros({8, 5, 2, 2}), Tensor::zeros({5}), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 5, 28, 28}));
  Tensor z = conv_transpose2d(Tensor::zeros({1, 2, 5, 3}), Tensor::zeros({2, 1, 4, 4}), Tensor(), 2, 1);
  EXPECT_EQ(z.shape(), (Shape{1, 1, 10, 6}));
}

TEST(ConvTranspose2d, CopyKernelIsNearestUpsample) {
  std::mt19937_64 rng(8);
  Tensor x = random_tensor(rng, {1, 1, 2, 2});
  Tensor y = conv_transpose2d(x, Tensor::full({1, 1, 2, 2}, 1.0), Tensor::zeros({1}), 2);
  EXPECT_EQ(max_abs_diff(y.data(), upsample_nearest2x(x).data()), 0.0);
}

TEST(ConvTranspose2d, RejectsUnsupportedGeometry) {
  EXPECT_THROW(conv_transpose2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 2, 2}), Tensor(), 1), ConfigError);
  EXPECT_THROW(conv_transpose2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 3}), Tensor(), 2), ConfigError);
}

TEST(ConvTranspose2d, GradCheck) {
  std::mt19937_64 rng(9);
  auto report = grad_check([](const std::vector<Tensor>& in) { return conv_transpose2d(in[0], in[1], in[2], 2); },
                           {random_tensor(rng, {2, 3, 4, 4}), random_tensor(rng, {3, 2, 2, 2}), random_tensor(rng, {2})});
  EXPECT_TRUE(report.passed) << report.worst;
}

TEST(Linear, IdentityWeights) {
  std::mt19937_64 rng(10);
  Tensor x = random_tensor(rng, {3, 4});
  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[i * 5] = 1.0;
  Tensor y = linear(x, Tensor::from({4, 4}, eye), Tensor::zeros({4}));
  EXPECT_EQ(max_abs_diff(y.data(), x.data()), 0.0);
}

TEST(Linear, MaskBranchShape) {
  Tensor y = linear(Tensor::zeros({1, 14 * 14 * 128}), Tensor::zeros({784, 14 * 14 * 128}), Tensor::zeros({784}));
  EXPECT_EQ(y.shape(), (Shape{1, 784}));
}

TEST(Linear, GradCheck) {
  std::mt19937_64 rng(11);
  auto report = grad_check([](const std::vector<Tensor>& in) { return linear(in[0], in[1], in[2]); },
                           {random_tensor(rng, {4, 10}), random_tensor(rng, {6, 10}), random_tensor(rng, {6})});
  EXPECT_TRUE(report.passed) << report.worst;
}

TEST(Relu, SignCases) {
  Tensor neg = Tensor::from({3}, {-1.0, -2.0, -0.5});
  Tensor pos = Tensor::from({3}, {1.0, 2.0, 0.5});
  const Tensor out = relu(neg);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(max_abs_diff(relu(pos).data(), pos.data()), 0.0);
}

TEST(Relu, ZeroHasZeroSubgradient) {
  Tensor x = Tensor::from({2}, {0.0, 1.0}, true);
  sum(relu(x)).backward();
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 1.0);
}

TEST(Relu, GradCheckAwayFromKink) {
  std::mt19937_64 rng(12);
  Tensor x = random_tensor(rng, {5, 6});
  for (double& v : x.mutable_data()) v = v >= 0 ? v + 1e-3 : v - 1e-3;
  auto report = grad_check([](const std::vector<Tensor>& in) { return relu(in[0]); }, {x});
  EXPECT_TRUE(report.passed) << report.worst;
}

TEST(ElementwiseFuse, SingleInputIsIdentity) {
  std::mt19937_64 rng(13);
  Tensor x = random_tensor(rng, {2, 3});
  for (FuseMode m : {FuseMode::kMax, FuseMode::kSum, FuseMode::kProduct}) {
    EXPECT_EQ(max_abs_diff(elementwise_fuse({x}, m).data(), x.data()), 0.0);
  }
}

TEST(ElementwiseFuse, MaxOfIdenticalAndTieRouting) {
  std::mt19937_64 rng(14);
  Tensor a = random_tensor(rng, {2, 3});
  Tensor b = a.clone();
  b.set_requires_grad(true);
  Tensor y = elementwise_fuse({a, b}, FuseMode::kMax);
  EXPECT_EQ(max_abs_diff(y.data(), a.data()), 0.0);
  sum(y).backward();
  for (double g : a.grad()) EXPECT_EQ(g, 1.0);
  if (b.has_grad()) {
    for (double g : b.grad()) EXPECT_EQ(g, 0.0);
  }
}

TEST(ElementwiseFuse, SumGradientIsUpstream) {
  std::mt19937_64 rng(15);
  Tensor a = random_tensor(rng, {4}), b = random_tensor(rng, {4});
  Tensor y = elementwise_fuse({a, b}, FuseMode::kSum);
  const std::vector<double> up = {0.5, -1.0, 2.0, 3.0};
  y.backward(up);
  EXPECT_EQ(max_abs_diff(a.grad(), up), 0.0);
  EXPECT_EQ(max_abs_diff(b.grad(), up), 0.0);
}

TEST(ElementwiseFuse, ShapeMismatchThrows) {
  EXPECT_THROW(elementwise_fuse({Tensor::zeros({2}), Tensor::zeros({3})}, FuseMode::kSum), ContractError);
  EXPECT_THROW(elementwise_fuse({}, FuseMode::kSum), ContractError);
}

TEST(ElementwiseFuse, GradCheckAllModes) {
  std::mt19937_64 rng(16);
  for (FuseMode m : {FuseMode::kMax, FuseMode::kSum, FuseMode::kProduct}) {
    std::vector<Tensor> in;
    for (int i = 0; i < 4; ++i) in.push_back(random_tensor(rng, {3, 5}));
    auto report = grad_check([m](const std::vector<Tensor>& x) { return elementwise_fuse(x, m); }, in);
    EXPECT_TRUE(report.passed) << to_string(m) << ": " << report.worst;
  }
}

TEST(FuseMode, ParsesNames) {
  EXPECT_EQ(parse_fuse_mode("max"), FuseMode::kMax);
  EXPECT_EQ(parse_fuse_mode("sum"), FuseMode::kSum);
  EXPECT_EQ(parse_fuse_mode("product"), FuseMode::kProduct);
  EXPECT_THROW(parse_fuse_mode("mean"), ConfigError);
}

TEST(BilinearSample, IntegerCoordinatesGiveCells) {
  std::mt19937_64 rng(17);
  Tensor map = random_tensor(rng, {2, 5, 6});
  for (std::size_t y = 0; y < 5; ++y) {
    for (std::size_t x = 0; x < 6; ++x) {
      Tensor v = bilinear_sample(map, static_cast<double>(y), static_cast<double>(x));
      EXPECT_EQ(v.data()[0], map.at({0, y, x}));
      EXPECT_EQ(v.data()[1], map.at({1, y, x}));
    }
  }
}

TEST(BilinearSample, ConstantMap) {
  Tensor map = Tensor::full({1, 4, 4}, 2.5);
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int i = 0; i < 20; ++i) EXPECT_NEAR(bilinear_sample(map, u(rng), u(rng)).item(), 2.5, 1e-12);
}

TEST(BilinearSample, MatchesScalarOracle) {
  std::mt19937_64 rng(19);
  Tensor map = random_tensor(rng, {3, 9, 11});
  std::uniform_real_distribution<double> uy(-1.5, 9.5), ux(-1.5, 11.5);
  for (int i = 0; i < 50; ++i) {
    const double y = uy(rng), x = ux(rng);
    Tensor v = bilinear_sample(map, y, x);
    for (std::size_t c = 0; c < 3; ++c) {
      const double want = panet::testing::oracle_bilinear(map.data().data() + c * 99, 9, 11, y, x);
      EXPECT_NEAR(v.data()[c], want, 1e-6);
    }
  }
}

TEST(GradCheck, CorruptedBackwardFails) {
  std::mt19937_64 rng(20);
  // Scaling by 2 with a backward that claims 2.02.
  auto bad = [](const std::vector<Tensor>& in) {
    const Tensor& x = in[0];
    std::vector<double> out(x.data().begin(), x.data().end());
    for (double& v : out) v *= 2.0;
    return detail::make_result(x.shape(), std::move(out), {x}, [x](detail::TensorImpl& self) {
      auto g = x.impl()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * 1.01 * self.grad[i];
    });
  };
  auto report = grad_check(bad, {random_tensor(rng, {3, 4})});
  EXPECT_FALSE(report.passed);
  EXPECT_GT(report.max_rel_error, 1e-3);
}

TEST(GradCheck, LinearPasses) {
  std::mt19937_64 rng(21);
  auto report = grad_check([](const std::vector<Tensor>& in) { return linear(in[0], in[1], in[2]); },
                           {random_tensor(rng, {4, 10}), random_tensor(rng, {3, 10}), random_tensor(rng, {3})},
                           {.eps = 1e-4, .tol = 1e-4});
  EXPECT_TRUE(report.passed);
  EXPECT_GT(report.probes, 40u);
}

TEST(Determinism, RepeatedForwardIsBitIdentical) {
  std::mt19937_64 rng(22);
  Tensor x = random_tensor(rng, {2, 3, 8, 8}), w = random_tensor(rng, {4, 3, 3, 3}), b = random_tensor(rng, {4});
  Tensor y1 = conv2d(x, w, b, 1, 1), y2 = conv2d(x, w, b, 1, 1);
  EXPECT_TRUE(std::equal(y1.data().begin(), y1.data().end(), y2.data().begin()));
}

// The same values placed at different heap offsets must give bit-identical
// results; vectorized reductions may otherwise peel alignment-dependent heads.
TEST(Determinism, ResultsDoNotDependOnBufferAlignment) {
  std::mt19937_64 rng(23);
  const std::vector<Tensor> originals = {
      random_tensor(rng, {2, 5, 9, 7}, -1, 1, false), random_tensor(rng, {6, 5, 3, 3}, -1, 1, false),
      random_tensor(rng, {6}, -1, 1, false),         random_tensor(rng, {2, 6, 5, 4}, -1, 1, false),
      random_tensor(rng, {6, 3, 2, 2}, -1, 1, false), random_tensor(rng, {3}, -1, 1, false),
      random_tensor(rng, {9, 45}, -1, 1, false),      random_tensor(rng, {7, 45}, -1, 1, false),
      random_tensor(rng, {7}, -1, 1, false)};
  auto upstream = [](std::size_t n) {
    std::mt19937_64 r(n);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> v(n);
    for (double& x : v) x = u(r);
    return v;
  };

  std::vector<std::vector<double>> reference;
  std::set<std::uintptr_t> residues;
  // Everything stays alive so each round allocates fresh, shifted memory.
  std::vector<std::vector<char>> padding;
  std::vector<Tensor> keep;
  for (std::size_t shift = 0; shift < 24; ++shift) {
    padding.emplace_back(16 * shift + 1);
    std::vector<Tensor> in;
    for (const Tensor& t : originals) {
      in.push_back(Tensor::from(t.shape(), std::vector<double>(t.data().begin(), t.data().end()), true));
    }
    const Tensor y = conv2d(in[0], in[1], in[2], 1, 1);
    const Tensor t = conv_transpose2d(in[3], in[4], in[5], 2, 0);
    const Tensor z = linear(in[6], in[7], in[8]);
    for (const Tensor& out : {y, t, z}) {
      Tensor(out).backward(upstream(out.size()));
      residues.insert(reinterpret_cast<std::uintptr_t>(out.grad().data()) % 64);
    }

    std::vector<std::vector<double>> got;
    for (const Tensor& r : {y, t, z}) got.emplace_back(r.data().begin(), r.data().end());
    for (const Tensor& g : in) got.emplace_back(g.grad().begin(), g.grad().end());
    keep.insert(keep.end(), {y, t, z});
    keep.insert(keep.end(), in.begin(), in.end());
    if (reference.empty()) {
      reference = got;
      continue;
    }
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_EQ(got[k], reference[k]) << "shift " << shift << " item " << k;
  }
  EXPECT_GE(residues.size(), 2u) << "heap offsets did not vary, so the test proves nothing";
}

TEST(Shapes, ConcatTakeRowsReshape) {
  Tensor a = Tensor::from({1, 2}, {1, 2}), b = Tensor::from({2, 2}, {3, 4, 5, 6});
  Tensor c = concat0({a, b});
  EXPECT_EQ(c.shape(), (Shape{3, 2}));
  const std::vector<std::size_t> rows = {2, 0};
  Tensor t = take_rows(c, rows);
  EXPECT_EQ(std::vector<double>(t.data().begin(), t.data().end()), (std::vector<double>{5, 6, 1, 2}));
  EXPECT_THROW(reshape(c, {4}), ContractError);
}
