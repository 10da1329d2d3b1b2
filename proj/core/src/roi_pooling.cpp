#include "panet/roi_pooling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "panet/ops.hpp"

namespace panet {

double box_iou(const RoI& a, const RoI& b) {
  const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

int assign_level(const RoI& roi, double reference, int k0) {
  if (!(roi.width() > 0.0 && roi.height() > 0.0)) {
    throw ContractError("assign_level: box must have positive area");
  }
  const double k = std::floor(k0 + std::log2(std::sqrt(roi.area()) / reference));
  return static_cast<int>(std::clamp(k, static_cast<double>(kMinLevel), static_cast<double>(kMaxLevel)));
}

namespace {

// Sample coordinates in level cells: image coordinate / stride, shifted by half a
// cell so that cell centres sit at integer positions.
struct BinGeometry {
  double y0, x0, bin_h, bin_w;
};

BinGeometry bin_geometry(const RoI& roi, std::size_t out_size, std::size_t stride) {
  const double s = static_cast<double>(stride);
  return {roi.y0 / s - 0.5, roi.x0 / s - 0.5, (roi.height() / s) / static_cast<double>(out_size),
          (roi.width() / s) / static_cast<double>(out_size)};
}

}  // namespace

Tensor roi_align_batch(const Tensor& features, std::span<const RoI> rois, const RoIAlignParams& params,
                       std::size_t stride) {
  if (features.rank() != 4) throw ContractError("roi_align: expects [N,C,H,W] features");
  if (params.out_size == 0 || params.sampling_ratio == 0) {
    throw ContractError("roi_align: out_size and sampling_ratio must be >= 1");
  }
  const std::size_t n = features.dim(0), c = features.dim(1), h = features.dim(2), w = features.dim(3);
  const std::size_t s = params.out_size, sr = params.sampling_ratio;
  const std::size_t r = rois.size();
  const double inv_count = 1.0 / static_cast<double>(sr * sr);

  // Taps are computed once per (roi, bin, sample) and reused for every channel
  // and for backward.
  const std::size_t samples_per_roi = s * s * sr * sr;
  std::vector<detail::BilinearTap> taps(r * samples_per_roi);
  std::vector<std::size_t> images(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (rois[i].image >= n) throw ContractError("roi_align: roi image index out of range");
    images[i] = rois[i].image;
    const BinGeometry g = bin_geometry(rois[i], s, stride);
    std::size_t t = i * samples_per_roi;
    for (std::size_t by = 0; by < s; ++by) {
      for (std::size_t bx = 0; bx < s; ++bx) {
        for (std::size_t iy = 0; iy < sr; ++iy) {
          const double y = g.y0 + g.bin_h * (static_cast<double>(by) + (static_cast<double>(iy) + 0.5) / sr);
          for (std::size_t ix = 0; ix < sr; ++ix) {
            const double x = g.x0 + g.bin_w * (static_cast<double>(bx) + (static_cast<double>(ix) + 0.5) / sr);
            taps[t++] = detail::bilinear_taps(h, w, y, x);
          }
        }
      }
    }
  }

  std::vector<double> out(r * c * s * s, 0.0);
  const auto v = features.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* plane = v.data() + (images[i] * c + ch) * h * w;
      double* dst = out.data() + (i * c + ch) * s * s;
      const detail::BilinearTap* tp = taps.data() + i * samples_per_roi;
      for (std::size_t bin = 0; bin < s * s; ++bin) {
        double acc = 0.0;
        for (std::size_t k = 0; k < sr * sr; ++k, ++tp) {
          for (int q = 0; q < tp->count; ++q) acc += tp->weight[q] * plane[tp->index[q]];
        }
        dst[bin] = acc * inv_count;
      }
    }
  }

  return detail::make_result(
      {r, c, s, s}, std::move(out), {features},
      [features, taps = std::move(taps), images = std::move(images), r, c, h, w, s, sr, samples_per_roi,
       inv_count](detail::TensorImpl& self) {
        auto g = features.impl()->grad_buffer();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            double* plane = g.data() + (images[i] * c + ch) * h * w;
            const double* up = self.grad.data() + (i * c + ch) * s * s;
            const detail::BilinearTap* tp = taps.data() + i * samples_per_roi;
            for (std::size_t bin = 0; bin < s * s; ++bin) {
              const double gb = up[bin] * inv_count;
              for (std::size_t k = 0; k < sr * sr; ++k, ++tp) {
                for (int q = 0; q < tp->count; ++q) plane[tp->index[q]] += tp->weight[q] * gb;
              }
            }
          }
        }
      });
}

Tensor roi_align(const Tensor& level_map, const RoI& roi, std::size_t out_size, std::size_t sampling_ratio,
                 std::size_t stride) {
  if (level_map.rank() != 3) throw ContractError("roi_align: expects [C,H,W] map");
  Tensor batched = reshape(level_map, {1, level_map.dim(0), level_map.dim(1), level_map.dim(2)});
  RoI single = roi;
  single.image = 0;
  Tensor pooled = roi_align_batch(batched, std::span<const RoI>(&single, 1), {out_size, sampling_ratio}, stride);
  return reshape(pooled, {level_map.dim(0), out_size, out_size});
}

PooledGrid adaptive_pool(const std::array<Tensor, 4>& levels, std::span<const RoI> rois,
                         const RoIAlignParams& params) {
  PooledGrid grid;
  for (std::size_t l = 0; l < 4; ++l) grid.per_level[l] = roi_align_batch(levels[l], rois, params, kLevelStrides[l]);
  return grid;
}

Tensor single_level_pool(const std::array<Tensor, 4>& levels, std::span<const RoI> rois,
                         const RoIAlignParams& params) {
  std::array<std::vector<RoI>, 4> routed;
  std::array<std::vector<std::size_t>, 4> origin;
  for (std::size_t i = 0; i < rois.size(); ++i) {
    const int level = rois[i].assigned_level;
    if (level < kMinLevel || level > kMaxLevel) throw ContractError("single_level_pool: roi has no assigned level");
    routed[level - kMinLevel].push_back(rois[i]);
    origin[level - kMinLevel].push_back(i);
  }
  std::vector<Tensor> parts;
  std::vector<std::size_t> position(rois.size());
  std::size_t row = 0;
  for (std::size_t l = 0; l < 4; ++l) {
    if (routed[l].empty()) continue;
    parts.push_back(roi_align_batch(levels[l], routed[l], params, kLevelStrides[l]));
    for (std::size_t i : origin[l]) position[i] = row++;
  }
  if (parts.empty()) {
    return Tensor::zeros({0, levels[0].dim(1), params.out_size, params.out_size});
  }
  return take_rows(concat0(parts), position);
}

double SourceRatioStats::ratio(int level) const {
  if (total == 0) return 0.0;
  return static_cast<double>(counts.at(static_cast<std::size_t>(level - kMinLevel))) / static_cast<double>(total);
}

double SourceRatioStats::foreign_fraction() const {
  if (total == 0) return 0.0;
  return 1.0 - ratio(group);
}

SourceRatioStats& SourceRatioStats::merge(const SourceRatioStats& other) {
  if (total != 0 && other.total != 0 && group != other.group) {
    throw ContractError("source ratio stats: cannot merge different groups");
  }
  if (total == 0) group = other.group;
  for (std::size_t i = 0; i < 4; ++i) counts[i] += other.counts[i];
  total += other.total;
  return *this;
}

namespace {

void tally_rows(const std::vector<Tensor>& grids, std::size_t row_begin, std::size_t row_end,
                SourceRatioStats& stats, bool count_unanimous) {
  const std::size_t rows = grids[0].dim(0);
  const std::size_t per_row = rows == 0 ? 0 : grids[0].size() / rows;
  for (std::size_t i = row_begin * per_row; i < row_end * per_row; ++i) {
    std::size_t best = 0;
    double best_value = grids[0].data()[i];
    bool all_equal = true;
    for (std::size_t l = 1; l < 4; ++l) {
      all_equal = all_equal && grids[l].data()[i] == best_value;
      if (grids[l].data()[i] > best_value) {
        best_value = grids[l].data()[i];
        best = l;
      }
    }
    if (all_equal && !count_unanimous) continue;
    ++stats.counts[best];
    ++stats.total;
  }
}

void check_grids(const std::vector<Tensor>& grids) {
  if (grids.size() != 4) throw ContractError("source_ratio_stats: expects one grid per level (4)");
  for (const auto& g : grids) {
    if (g.shape() != grids[0].shape()) throw ContractError("source_ratio_stats: grid shape mismatch");
  }
}

}  // namespace

SourceRatioStats source_ratio_stats(const std::vector<Tensor>& grids_after_first_layer, int group,
                                    bool count_unanimous) {
  check_grids(grids_after_first_layer);
  SourceRatioStats stats;
  stats.group = group;
  const std::size_t rows = grids_after_first_layer[0].rank() == 0 ? 0 : grids_after_first_layer[0].dim(0);
  tally_rows(grids_after_first_layer, 0, rows, stats, count_unanimous);
  return stats;
}

void SourceRatioTable::accumulate(const std::vector<Tensor>& grids, std::span<const int> groups) {
  check_grids(grids);
  if (groups.size() != grids[0].dim(0)) throw ContractError("source_ratio_stats: one group per row required");
  for (std::size_t r = 0; r < groups.size(); ++r) {
    SourceRatioStats one;
    one.group = groups[r];
    tally_rows(grids, r, r + 1, one, count_unanimous_);
    merge(one);
  }
}

void SourceRatioTable::merge(const SourceRatioStats& stats) {
  auto [it, inserted] = groups_.try_emplace(stats.group);
  if (inserted) it->second.group = stats.group;
  it->second.merge(stats);
}

void SourceRatioTable::write_csv(std::ostream& os) const {
  os << "group_level,source_level,count,total,ratio\n";
  for (const auto& [group, stats] : groups_) {
    for (int level = kMinLevel; level <= kMaxLevel; ++level) {
      char ratio[32];
      std::snprintf(ratio, sizeof ratio, "%.6f", stats.ratio(level));
      os << group << ',' << level << ',' << stats.counts[static_cast<std::size_t>(level - kMinLevel)] << ','
         << stats.total << ',' << ratio << '\n';
    }
  }
}

}  // namespace panet
