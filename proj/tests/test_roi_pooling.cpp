#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "panet/grad_check.hpp"
#include "panet/ops.hpp"
#include "panet/roi_pooling.hpp"
#include "test_support.hpp"

using namespace panet;
using panet::testing::max_abs_diff;
using panet::testing::oracle_roi_align;
using panet::testing::random_roi;
using panet::testing::random_tensor;

TEST(AssignLevel, ReferenceCases) {
  RoI ref{0, 0, 56, 56};
  EXPECT_EQ(assign_level(ref, 56.0), 4);
  RoI quarter{0, 0, 14, 14};
  EXPECT_EQ(assign_level(quarter, 56.0), 2);
  RoI paper{10, 10, 234, 234};
  EXPECT_EQ(assign_level(paper, 224.0), 4);
}

TEST(AssignLevel, DoublingAddsOneUntilClamp) {
  std::mt19937_64 rng(1);
  // sqrt(wh) >= 28 keeps the unclamped level at 3 or above.
  std::uniform_real_distribution<double> side(28.0, 200.0);
  for (int i = 0; i < 100; ++i) {
    RoI r{0, 0, side(rng), side(rng)};
    RoI d{0, 0, 2 * r.x1, 2 * r.y1};
    const int a = assign_level(r, 56.0), b = assign_level(d, 56.0);
    EXPECT_EQ(b, std::min(a + 1, kMaxLevel));
  }
}

TEST(AssignLevel, TranslationInvariantAndMonotone) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(1.0, 60.0);
  for (int i = 0; i < 100; ++i) {
    RoI r{0, 0, u(rng), u(rng)};
    const double dx = u(rng), dy = u(rng);
    RoI t{r.x0 + dx, r.y0 + dy, r.x1 + dx, r.y1 + dy};
    EXPECT_EQ(assign_level(r, 56.0), assign_level(t, 56.0));
    RoI bigger{0, 0, r.x1 * 1.3, r.y1 * 1.1};
    EXPECT_GE(assign_level(bigger, 56.0), assign_level(r, 56.0));
  }
}

TEST(AssignLevel, DegenerateBoxThrows) {
  EXPECT_THROW(assign_level(RoI{5, 5, 5, 9}, 56.0), ContractError);
}

TEST(RoIAlign, ConstantMap) {
  Tensor map = Tensor::full({2, 10, 10}, 1.75);
  RoI r{8, 8, 30, 28};
  Tensor out = roi_align(map, r, 7, 2, 4);
  for (double v : out.data()) EXPECT_NEAR(v, 1.75, 1e-12);
}

TEST(RoIAlign, IntegerAlignedBoxGivesCells) {
  std::mt19937_64 rng(3);
  Tensor map = random_tensor(rng, {1, 12, 12}, -1, 1, false);
  const std::size_t stride = 4, s = 5, a = 3, b = 2;
  RoI r{double(a * stride), double(b * stride), double((a + s) * stride), double((b + s) * stride)};
  Tensor out = roi_align(map, r, s, 1, stride);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) EXPECT_DOUBLE_EQ(out.at({0, i, j}), map.at({0, b + i, a + j}));
  }
}

TEST(RoIAlign, ThirtyRandomBoxesMatchOracle) {
  std::mt19937_64 rng(4);
  Tensor map = random_tensor(rng, {8, 24, 24}, -1, 1, false);
  for (int i = 0; i < 30; ++i) {
    const RoI r = random_roi(rng, 90.0, 0.5, 60.0);
    Tensor out = roi_align(map, r, 7, 2, 4);
    EXPECT_LT(max_abs_diff(out.data(), oracle_roi_align(map, r, 7, 2, 4)), 1e-6);
  }
}

TEST(RoIAlign, SubCellBoxesMatchOracle) {
  std::mt19937_64 rng(5);
  Tensor map = random_tensor(rng, {2, 6, 6}, -1, 1, false);
  for (int i = 0; i < 20; ++i) {
    const RoI r = random_roi(rng, 40.0, 0.1, 6.0);
    EXPECT_LT(max_abs_diff(roi_align(map, r, 3, 2, 8).data(), oracle_roi_align(map, r, 3, 2, 8)), 1e-6);
  }
}

TEST(RoIAlign, BatchRoutesByImage) {
  std::mt19937_64 rng(6);
  Tensor feats = random_tensor(rng, {2, 3, 10, 10}, -1, 1, false);
  std::vector<RoI> rois = {RoI{4, 4, 30, 20, 1}, RoI{0, 0, 40, 40, 0}};
  Tensor out = roi_align_batch(feats, rois, {4, 2}, 4);
  for (std::size_t i = 0; i < rois.size(); ++i) {
    Tensor map = Tensor::from({3, 10, 10}, std::vector<double>(feats.data().begin() + rois[i].image * 300,
                                                               feats.data().begin() + (rois[i].image + 1) * 300));
    const auto want = oracle_roi_align(map, rois[i], 4, 2, 4);
    EXPECT_LT(max_abs_diff(std::span<const double>(out.data().data() + i * 48, 48), want), 1e-12);
  }
  rois[0].image = 5;
  EXPECT_THROW(roi_align_batch(feats, rois, {4, 2}, 4), ContractError);
}

TEST(RoIAlign, GradCheck) {
  std::mt19937_64 rng(7);
  std::vector<RoI> rois = {random_roi(rng, 40, 3, 30), random_roi(rng, 40, 3, 30)};
  auto report = grad_check(
      [&](const std::vector<Tensor>& in) { return roi_align_batch(in[0], rois, {4, 2}, 4); },
      {random_tensor(rng, {1, 2, 12, 12})});
  EXPECT_TRUE(report.passed) << report.worst;
}

namespace {

// Maps for a 128-pixel image. Boxes inside [16, 112] sample every level away
// from the zero padding, so constant maps pool to their constant.
std::array<Tensor, 4> constant_levels(std::size_t channels, std::array<double, 4> values, bool grad = false) {
  std::array<Tensor, 4> levels;
  for (std::size_t l = 0; l < 4; ++l) {
    const std::size_t side = 128 / kLevelStrides[l];
    levels[l] = Tensor::full({1, channels, side, side}, values[l], grad);
  }
  return levels;
}

}  // namespace

TEST(AdaptivePool, SharedShapesAndConstantLevels) {
  const auto levels = constant_levels(3, {2.0, 3.0, 4.0, 5.0});
  std::vector<RoI> rois = {RoI{20, 24, 50, 70}, RoI{16, 16, 112, 112}};
  const PooledGrid grid = adaptive_pool(levels, rois, {7, 2});
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_EQ(grid.per_level[l].shape(), (Shape{2, 3, 7, 7}));
    for (double v : grid.per_level[l].data()) EXPECT_NEAR(v, 2.0 + l, 1e-12);
  }
}

TEST(AdaptivePool, SingleLevelLossReachesOnlyThatLevel) {
  auto levels = constant_levels(2, {1, 1, 1, 1}, true);
  std::vector<RoI> rois = {RoI{10, 10, 40, 50}};
  const PooledGrid grid = adaptive_pool(levels, rois, {7, 2});
  sum(grid.per_level[2]).backward();
  for (std::size_t l = 0; l < 4; ++l) {
    double norm = 0.0;
    if (levels[l].has_grad()) {
      for (double g : levels[l].grad()) norm += std::abs(g);
    }
    if (l == 2) {
      EXPECT_GT(norm, 0.0);
    } else {
      EXPECT_EQ(norm, 0.0);
    }
  }
}

TEST(AdaptivePool, SumFusionReachesAllLevels) {
  auto levels = constant_levels(2, {1, 1, 1, 1}, true);
  std::vector<RoI> rois = {RoI{10, 10, 40, 50}};
  sum(elementwise_fuse(adaptive_pool(levels, rois, {7, 2}).as_list(), FuseMode::kSum)).backward();
  for (const auto& level : levels) {
    ASSERT_TRUE(level.has_grad());
    double norm = 0.0;
    for (double g : level.grad()) norm += std::abs(g);
    EXPECT_GT(norm, 0.0);
  }
}

TEST(SingleLevelPool, UsesAssignedLevelInInputOrder) {
  const auto levels = constant_levels(1, {2.0, 3.0, 4.0, 5.0});
  std::vector<RoI> rois = {RoI{20, 20, 100, 100}, RoI{30, 30, 40, 40}, RoI{20, 20, 60, 60}};
  for (RoI& r : rois) r.assigned_level = assign_level(r, 56.0);
  Tensor out = single_level_pool(levels, rois, {2, 2});
  EXPECT_EQ(out.shape(), (Shape{3, 1, 2, 2}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out.at({i, 0, 0, 0}), rois[i].assigned_level, 1e-12);
  rois[0].assigned_level = 0;
  EXPECT_THROW(single_level_pool(levels, rois, {2, 2}), ContractError);
}

TEST(SourceRatio, DominantLevelTakesEverything) {
  std::vector<Tensor> grids;
  for (int l = 0; l < 4; ++l) grids.push_back(Tensor::full({2, 3, 2, 2}, l == 1 ? 5.0 : 1.0));
  const auto stats = source_ratio_stats(grids, 3);
  EXPECT_EQ(stats.counts[1], stats.total);
  EXPECT_DOUBLE_EQ(stats.ratio(3), 1.0);
  EXPECT_DOUBLE_EQ(stats.foreign_fraction(), 0.0);
}

TEST(SourceRatio, TiesGoToLevelTwo) {
  std::vector<Tensor> grids(4, Tensor::full({1, 2, 3, 3}, 0.5));
  const auto stats = source_ratio_stats(grids, 4);
  EXPECT_EQ(stats.counts[0], stats.total);
  EXPECT_EQ(stats.total, 18u);
  EXPECT_EQ(source_ratio_stats(grids, 4, false).total, 0u);
}

TEST(SourceRatio, CountsSumAndMergeCommutes) {
  std::mt19937_64 rng(8);
  std::vector<Tensor> a, b;
  for (int l = 0; l < 4; ++l) {
    a.push_back(random_tensor(rng, {3, 4}, -1, 1, false));
    b.push_back(random_tensor(rng, {2, 4}, -1, 1, false));
  }
  const auto sa = source_ratio_stats(a, 2), sb = source_ratio_stats(b, 2);
  EXPECT_EQ(sa.counts[0] + sa.counts[1] + sa.counts[2] + sa.counts[3], sa.total);
  SourceRatioStats ab = sa, ba = sb;
  ab.merge(sb);
  ba.merge(sa);
  EXPECT_EQ(ab.counts, ba.counts);
  EXPECT_EQ(ab.total, 20u);
  SourceRatioStats other;
  other.group = 3;
  other.total = 1;
  EXPECT_THROW(ab.merge(other), ContractError);
}

TEST(SourceRatio, TableCsv) {
  std::vector<Tensor> grids;
  for (int l = 0; l < 4; ++l) grids.push_back(Tensor::full({2, 1}, l == 3 ? 1.0 : 0.0));
  SourceRatioTable table;
  const std::vector<int> groups = {2, 4};
  table.accumulate(grids, groups);
  std::ostringstream os;
  table.write_csv(os);
  EXPECT_EQ(os.str(),
            "group_level,source_level,count,total,ratio\n"
            "2,2,0,1,0.000000\n2,3,0,1,0.000000\n2,4,0,1,0.000000\n2,5,1,1,1.000000\n"
            "4,2,0,1,0.000000\n4,3,0,1,0.000000\n4,4,0,1,0.000000\n4,5,1,1,1.000000\n");
}
