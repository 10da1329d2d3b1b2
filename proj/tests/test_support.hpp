#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "panet/roi_pooling.hpp"
#include "panet/tensor.hpp"

namespace panet::testing {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Scalar bilinear interpolation on one H x W plane, zero outside, written
// directly from the four-neighbour formula.
inline double oracle_bilinear(const double* plane, long h, long w, double y, double x) {
  auto cell = [&](long r, long c) { return (r < 0 || r >= h || c < 0 || c >= w) ? 0.0 : plane[r * w + c]; };
  const long r0 = static_cast<long>(std::floor(y));
  const long c0 = static_cast<long>(std::floor(x));
  const double dy = y - static_cast<double>(r0);
  const double dx = x - static_cast<double>(c0);
  return cell(r0, c0) * (1 - dy) * (1 - dx) + cell(r0, c0 + 1) * (1 - dy) * dx + cell(r0 + 1, c0) * dy * (1 - dx) +
         cell(r0 + 1, c0 + 1) * dy * dx;
}

// Scalar ROIAlign: level coordinate = image / stride - 0.5, regular sr x sr
// samples per bin, averaged.
inline std::vector<double> oracle_roi_align(const Tensor& map, const RoI& roi, std::size_t out, std::size_t sr,
                                            std::size_t stride) {
  const long c = map.dim(0), h = map.dim(1), w = map.dim(2);
  const double s = static_cast<double>(stride);
  std::vector<double> result;
  for (long ch = 0; ch < c; ++ch) {
    const double* plane = map.data().data() + ch * h * w;
    for (std::size_t by = 0; by < out; ++by) {
      for (std::size_t bx = 0; bx < out; ++bx) {
        double total = 0.0;
        for (std::size_t iy = 0; iy < sr; ++iy) {
          for (std::size_t ix = 0; ix < sr; ++ix) {
            const double fy = (by + (iy + 0.5) / sr) / out;
            const double fx = (bx + (ix + 0.5) / sr) / out;
            const double y = (roi.y0 + fy * (roi.y1 - roi.y0)) / s - 0.5;
            const double x = (roi.x0 + fx * (roi.x1 - roi.x0)) / s - 0.5;
            total += oracle_bilinear(plane, h, w, y, x);
          }
        }
        result.push_back(total / static_cast<double>(sr * sr));
      }
    }
  }
  return result;
}

inline RoI random_roi(std::mt19937_64& rng, double extent, double min_side, double max_side) {
  std::uniform_real_distribution<double> pos(-2.0, extent), side(min_side, max_side);
  RoI r;
  r.x0 = pos(rng);
  r.y0 = pos(rng);
  r.x1 = r.x0 + side(rng);
  r.y1 = r.y0 + side(rng);
  return r;
}

}  // namespace panet::testing
