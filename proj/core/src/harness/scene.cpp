#include "panet/harness/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace panet::harness {

BinaryMask rasterize_ellipse(double cx, double cy, double semi_x, double semi_y, std::size_t height,
                             std::size_t width) {
  BinaryMask mask(height * width, 0);
  for (std::size_t y = 0; y < height; ++y) {
    const double dy = (static_cast<double>(y) + 0.5 - cy) / semi_y;
    for (std::size_t x = 0; x < width; ++x) {
      const double dx = (static_cast<double>(x) + 0.5 - cx) / semi_x;
      if (dx * dx + dy * dy <= 1.0) mask[y * width + x] = 1;
    }
  }
  return mask;
}

BinaryMask rasterize_rectangle(double x0, double y0, double x1, double y1, std::size_t height, std::size_t width) {
  BinaryMask mask(height * width, 0);
  for (std::size_t y = 0; y < height; ++y) {
    const double py = static_cast<double>(y) + 0.5;
    if (py < y0 || py > y1) continue;
    for (std::size_t x = 0; x < width; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      if (px >= x0 && px <= x1) mask[y * width + x] = 1;
    }
  }
  return mask;
}

RoI mask_bounds(const BinaryMask& mask, std::size_t height, std::size_t width) {
  std::size_t x_min = width, y_min = height, x_max = 0, y_max = 0;
  bool any = false;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      if (!mask[y * width + x]) continue;
      any = true;
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  }
  if (!any) throw ContractError("mask_bounds: empty mask");
  RoI box;
  box.x0 = static_cast<double>(x_min);
  box.y0 = static_cast<double>(y_min);
  box.x1 = static_cast<double>(x_max + 1);
  box.y1 = static_cast<double>(y_max + 1);
  return box;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.size() != b.size()) throw ContractError("mask_iou: size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

SyntheticScene generate_synthetic_scene(std::uint64_t seed, std::size_t height, std::size_t width,
                                        std::size_t max_instances, const SceneOptions& options) {
  if (height % 32 != 0 || width % 32 != 0 || height == 0 || width == 0) {
    throw ContractError("synthetic scene: H and W must be positive multiples of 32");
  }
  if (max_instances == 0) throw ContractError("synthetic scene: max_instances must be >= 1");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SyntheticScene scene;
  scene.height = height;
  scene.width = width;

  const double max_side = std::min({options.max_side, static_cast<double>(width) - 2.0,
                                    static_cast<double>(height) - 2.0});
  const auto target = static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(1, max_instances)(rng));

  std::vector<std::array<double, 3>> colours;
  for (int attempt = 0; attempt < 200 && scene.instances.size() < target; ++attempt) {
    const double w = std::round(uniform(options.min_side, max_side));
    const double h = std::round(std::clamp(w * std::exp(uniform(-0.5, 0.5)), options.min_side, max_side));
    const double x0 = std::floor(uniform(0.0, static_cast<double>(width) - w));
    const double y0 = std::floor(uniform(0.0, static_cast<double>(height) - h));
    RoI candidate{x0 - options.gap, y0 - options.gap, x0 + w + options.gap, y0 + h + options.gap};
    const bool clash = std::any_of(scene.instances.begin(), scene.instances.end(),
                                   [&](const Instance& inst) { return box_iou(candidate, inst.box) > 0.0; });
    if (clash) continue;

    Instance inst;
    inst.class_id = unit(rng) < 0.5 ? kRectangleClass : kEllipseClass;
    inst.mask = inst.class_id == kRectangleClass
                    ? rasterize_rectangle(x0, y0, x0 + w, y0 + h, height, width)
                    : rasterize_ellipse(x0 + 0.5 * w, y0 + 0.5 * h, 0.5 * w, 0.5 * h, height, width);
    inst.box = mask_bounds(inst.mask, height, width);

    std::array<double, 3> colour{};
    do {
      for (auto& c : colour) c = unit(rng);
    } while (std::none_of(colour.begin(), colour.end(), [](double c) { return std::abs(c - 0.5) >= 0.3; }));
    colours.push_back(colour);
    scene.instances.push_back(std::move(inst));
  }

  std::normal_distribution<double> bg_noise(0.0, options.background_noise);
  std::normal_distribution<double> fg_noise(0.0, options.fill_noise);
  std::vector<double> pixels(3 * height * width);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < height * width; ++i) pixels[c * height * width + i] = 0.5 + bg_noise(rng);
  }
  for (std::size_t k = 0; k < scene.instances.size(); ++k) {
    const auto& mask = scene.instances[k].mask;
    for (std::size_t i = 0; i < height * width; ++i) {
      if (!mask[i]) continue;
      for (std::size_t c = 0; c < 3; ++c) pixels[c * height * width + i] = colours[k][c] + fg_noise(rng);
    }
  }
  for (double& p : pixels) p = std::clamp(p, 0.0, 1.0);
  scene.image = Tensor::from({3, height, width}, std::move(pixels));
  return scene;
}

std::vector<SyntheticScene> generate_scenes(std::uint64_t seed, std::size_t count, std::size_t size,
                                            std::size_t max_instances) {
  std::vector<SyntheticScene> scenes;
  scenes.reserve(count);
  std::mt19937_64 seeder(seed);
  for (std::size_t i = 0; i < count; ++i) scenes.push_back(generate_synthetic_scene(seeder(), size, size, max_instances));
  return scenes;
}

}  // namespace panet::harness
