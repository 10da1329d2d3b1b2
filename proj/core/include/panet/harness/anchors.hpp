#pragma once

#include <string_view>
#include <vector>

namespace panet::harness {

/// One anchor template: area `scale`, aspect ratio width/height `ratio`.
struct AnchorShape {
  double width = 0;
  double height = 0;
  double scale = 0;
  double ratio = 0;
};

struct AnchorSet {
  std::vector<double> scales;         // areas, e.g. 32^2
  std::vector<double> aspect_ratios;  // width / height
  std::vector<AnchorShape> anchors;   // scale-major, ratio-minor
};

enum class AnchorPreset { kCityscapes, kMvd, kCustom };

AnchorPreset parse_anchor_preset(std::string_view name);

/// Cross product of scales and ratios; each template solves w*h = scale, w/h = ratio.
AnchorSet make_anchor_set(std::vector<double> scales, std::vector<double> aspect_ratios);

/// mvd: 7 scales {8^2..512^2} x 5 ratios {0.2,0.5,1,2,5}.
/// cityscapes: 5 scales {32^2..512^2} x 3 ratios {0.5,1,2}.
/// custom: the given scales and ratios.
AnchorSet generate_anchors(AnchorPreset preset, std::vector<double> custom_scales = {},
                           std::vector<double> custom_ratios = {});

}  // namespace panet::harness
