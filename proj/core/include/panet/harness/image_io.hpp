#pragma once

#include <string>

#include "panet/harness/scene.hpp"

namespace panet::harness {

/// Binary PPM (P6) of a [3,H,W] image with values in [0,1].
void write_ppm(const std::string& path, const Tensor& image);

/// Scene image with each instance mask tinted and its box outlined.
Tensor render_overlay(const SyntheticScene& scene);

}  // namespace panet::harness
