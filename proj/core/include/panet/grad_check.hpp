#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "panet/tensor.hpp"

namespace panet {

struct GradCheckOptions {
  double eps = 1e-4;
  double tol = 1e-4;
  /// Denominator floor of the relative error, so near-zero gradients are
  /// compared absolutely at this scale.
  double rel_floor = 1e-3;
  /// Coordinates probed per input; 0 probes all of them.
  std::size_t max_probes_per_input = 0;
  /// The op output is reduced as sum(out * w) with w drawn from this seed.
  /// A seed of 0 uses plain sum(out).
  std::uint64_t projection_seed = 0x5eed;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  bool finite = true;
  bool passed = false;
  std::string worst;  // "input#i[k]: analytic a vs numeric n"
};

using GradCheckedOp = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients of a scalar projection of `op` against
/// central finite differences for every input that requires grad.
GradCheckReport grad_check(const GradCheckedOp& op, std::vector<Tensor> inputs,
                           const GradCheckOptions& options = {});

}  // namespace panet
