#pragma once

#include <cstdint>
#include <vector>

#include "panet/roi_pooling.hpp"
#include "panet/tensor.hpp"

namespace panet::harness {

inline constexpr int kRectangleClass = 1;
inline constexpr int kEllipseClass = 2;

/// Binary image-resolution mask, row-major H*W.
using BinaryMask = std::vector<std::uint8_t>;

struct Instance {
  int class_id = 0;
  RoI box;  // tight bounds of the mask, pixel edges
  BinaryMask mask;
};

struct SyntheticScene {
  std::size_t height = 0;
  std::size_t width = 0;
  Tensor image;  // [3,H,W], values in [0,1]
  std::vector<Instance> instances;
};

struct SceneOptions {
  double min_side = 10.0;
  double max_side = 56.0;
  double gap = 2.0;  // minimum spacing between instance boxes
  double background_noise = 0.08;
  double fill_noise = 0.04;
};

/// Deterministic in `seed`: 1..max_instances non-overlapping rectangles (class 1)
/// and ellipses (class 2) with random fill colours on a noise background.
SyntheticScene generate_synthetic_scene(std::uint64_t seed, std::size_t height, std::size_t width,
                                        std::size_t max_instances, const SceneOptions& options = {});

std::vector<SyntheticScene> generate_scenes(std::uint64_t seed, std::size_t count, std::size_t size,
                                            std::size_t max_instances);

/// Pixels whose centres fall inside the axis-aligned ellipse.
BinaryMask rasterize_ellipse(double cx, double cy, double semi_x, double semi_y, std::size_t height,
                             std::size_t width);
BinaryMask rasterize_rectangle(double x0, double y0, double x1, double y1, std::size_t height, std::size_t width);

/// Tight [min, max+1) pixel bounds of a non-empty mask.
RoI mask_bounds(const BinaryMask& mask, std::size_t height, std::size_t width);

double mask_iou(const BinaryMask& a, const BinaryMask& b);

}  // namespace panet::harness
