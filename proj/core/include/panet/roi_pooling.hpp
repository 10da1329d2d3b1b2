#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "panet/feature_pyramid.hpp"
#include "panet/tensor.hpp"

namespace panet {

/// A proposal box in image pixel coordinates ([x0, x1) x [y0, y1)), with the
/// index of its image within the batch and its FPN-assigned level.
struct RoI {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::size_t image = 0;
  int assigned_level = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
};

double box_iou(const RoI& a, const RoI& b);

/// FPN size heuristic: floor(k0 + log2(sqrt(w*h) / reference)) clamped to [2, 5].
int assign_level(const RoI& roi, double reference, int k0 = 4);

struct RoIAlignParams {
  std::size_t out_size = 7;
  std::size_t sampling_ratio = 2;
};

/// ROIAlign for a single box on one level map [C,H,W]; returns [C,S,S].
Tensor roi_align(const Tensor& level_map, const RoI& roi, std::size_t out_size, std::size_t sampling_ratio,
                 std::size_t stride);

/// Batched ROIAlign on [N,C,H,W]; roi.image selects the map. Returns [R,C,S,S].
Tensor roi_align_batch(const Tensor& features, std::span<const RoI> rois, const RoIAlignParams& params,
                       std::size_t stride);

/// Pooled grids from every level, each [R,C,S,S]. Fusion happens in the heads.
struct PooledGrid {
  std::array<Tensor, 4> per_level;
  std::vector<Tensor> as_list() const { return {per_level.begin(), per_level.end()}; }
};

PooledGrid adaptive_pool(const std::array<Tensor, 4>& levels, std::span<const RoI> rois,
                         const RoIAlignParams& params);

/// FPN baseline routing: each box pooled from its assigned level only. [R,C,S,S].
Tensor single_level_pool(const std::array<Tensor, 4>& levels, std::span<const RoI> rois,
                         const RoIAlignParams& params);

/// Max-fusion win tallies for proposals of one assigned level.
struct SourceRatioStats {
  int group = 0;
  std::array<std::uint64_t, 4> counts{};  // index 0 is level 2
  std::uint64_t total = 0;

  double ratio(int level) const;
  /// Fraction of wins sourced from levels other than `group`.
  double foreign_fraction() const;
  SourceRatioStats& merge(const SourceRatioStats& other);
};

/// Tallies, per element, which of the four grids attains the maximum (ties go
/// to the lowest level) for a batch whose proposals all belong to `group`.
/// With count_unanimous = false, elements where all four grids are equal
/// (typically all zero after a ReLU) have no winner and are left out.
SourceRatioStats source_ratio_stats(const std::vector<Tensor>& grids_after_first_layer, int group,
                                    bool count_unanimous = true);

/// Group-keyed accumulation over a batch of mixed groups (one per leading row).
class SourceRatioTable {
 public:
  explicit SourceRatioTable(bool count_unanimous = true) : count_unanimous_(count_unanimous) {}

  void accumulate(const std::vector<Tensor>& grids_after_first_layer, std::span<const int> groups);
  void merge(const SourceRatioStats& stats);
  const std::map<int, SourceRatioStats>& groups() const { return groups_; }
  /// CSV: group_level,source_level,count,total,ratio
  void write_csv(std::ostream& os) const;

 private:
  std::map<int, SourceRatioStats> groups_;
  bool count_unanimous_ = true;
};

}  // namespace panet
