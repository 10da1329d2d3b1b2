#pragma once

#include <vector>

#include "panet/harness/config.hpp"
#include "panet/nn.hpp"

namespace panet::harness {

/// SGD with momentum and L2 weight decay: v = m*v + lr*(g + wd*p); p -= v.
/// Parameters registered without decay (batch-norm affine terms) skip the wd term.
class SGD {
 public:
  SGD(ParameterRegistry& registry, double momentum, double weight_decay);
  void step(double lr);

 private:
  ParameterRegistry& registry_;
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

/// Linear warmup from lr/10 over warmup_steps, then the base rate, multiplied
/// by lr_drop_factor once step exceeds lr_drop_at * steps. Steps are 1-based.
double learning_rate_at(const TrainConfig& cfg, std::size_t step);

}  // namespace panet::harness
