#include "panet/harness/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace panet::harness {

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ContractError("write_ppm: expects [3,H,W]");
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("write_ppm: cannot write " + path);
  out << "P6\n" << w << ' ' << h << "\n255\n";
  const auto v = image.data();
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double x = std::clamp(v[c * h * w + i], 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(x * 255.0))));
    }
  }
}

Tensor render_overlay(const SyntheticScene& scene) {
  const std::size_t h = scene.height, w = scene.width, plane = h * w;
  std::vector<double> px(scene.image.data().begin(), scene.image.data().end());
  static constexpr double kTint[3][3] = {{1.0, 0.2, 0.2}, {0.2, 0.4, 1.0}, {0.2, 1.0, 0.3}};
  for (const Instance& inst : scene.instances) {
    const double* tint = kTint[static_cast<std::size_t>(inst.class_id) % 3];
    for (std::size_t i = 0; i < plane; ++i) {
      if (!inst.mask[i]) continue;
      for (std::size_t c = 0; c < 3; ++c) px[c * plane + i] = 0.5 * px[c * plane + i] + 0.5 * tint[c];
    }
    const auto x0 = static_cast<std::size_t>(inst.box.x0), x1 = static_cast<std::size_t>(inst.box.x1) - 1;
    const auto y0 = static_cast<std::size_t>(inst.box.y0), y1 = static_cast<std::size_t>(inst.box.y1) - 1;
    for (std::size_t y = y0; y <= y1; ++y) {
      for (std::size_t x = x0; x <= x1; ++x) {
        if (y != y0 && y != y1 && x != x0 && x != x1) continue;
        for (std::size_t c = 0; c < 3; ++c) px[c * plane + y * w + x] = tint[c];
      }
    }
  }
  return Tensor::from({3, h, w}, std::move(px));
}

}  // namespace panet::harness
