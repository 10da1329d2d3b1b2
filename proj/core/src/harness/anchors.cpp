#include "panet/harness/anchors.hpp"

#include <cmath>
#include <string>

#include "panet/tensor.hpp"

namespace panet::harness {

AnchorPreset parse_anchor_preset(std::string_view name) {
  if (name == "cityscapes") return AnchorPreset::kCityscapes;
  if (name == "mvd") return AnchorPreset::kMvd;
  if (name == "custom") return AnchorPreset::kCustom;
  throw ConfigError("unknown anchor preset '" + std::string(name) + "' (cityscapes|mvd|custom)");
}

AnchorSet make_anchor_set(std::vector<double> scales, std::vector<double> aspect_ratios) {
  AnchorSet set;
  for (double s : scales) {
    if (!(s > 0.0)) throw ContractError("anchors: scales must be positive");
  }
  for (double r : aspect_ratios) {
    if (!(r > 0.0)) throw ContractError("anchors: aspect ratios must be positive");
  }
  for (double s : scales) {
    for (double r : aspect_ratios) {
      set.anchors.push_back({std::sqrt(s * r), std::sqrt(s / r), s, r});
    }
  }
  set.scales = std::move(scales);
  set.aspect_ratios = std::move(aspect_ratios);
  return set;
}

AnchorSet generate_anchors(AnchorPreset preset, std::vector<double> custom_scales,
                           std::vector<double> custom_ratios) {
  auto squares = [](std::initializer_list<double> sides) {
    std::vector<double> out;
    for (double s : sides) out.push_back(s * s);
    return out;
  };
  switch (preset) {
    case AnchorPreset::kMvd:
      return make_anchor_set(squares({8, 16, 32, 64, 128, 256, 512}), {0.2, 0.5, 1.0, 2.0, 5.0});
    case AnchorPreset::kCityscapes:
      return make_anchor_set(squares({32, 64, 128, 256, 512}), {0.5, 1.0, 2.0});
    case AnchorPreset::kCustom:
      if (custom_scales.empty() || custom_ratios.empty()) {
        throw ContractError("anchors: custom preset needs scales and ratios");
      }
      return make_anchor_set(std::move(custom_scales), std::move(custom_ratios));
  }
  throw ContractError("anchors: unknown preset");
}

}  // namespace panet::harness
