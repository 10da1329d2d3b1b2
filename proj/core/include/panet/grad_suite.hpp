#pragma once

#include <string>
#include <vector>

#include "panet/grad_check.hpp"

namespace panet {

struct GradSuiteEntry {
  std::string name;
  GradCheckReport report;
  double seconds = 0.0;
};

/// Finite-difference checks of every differentiable op, the bottom-up block,
/// both heads end to end and synchronized batch norm, on small random inputs.
std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed = 1);

}  // namespace panet
