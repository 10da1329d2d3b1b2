#include "panet/harness/optimizer.hpp"

namespace panet::harness {

SGD::SGD(ParameterRegistry& registry, double momentum, double weight_decay)
    : registry_(registry), momentum_(momentum), weight_decay_(weight_decay) {
  for (const auto& p : registry_.parameters()) velocity_.emplace_back(p.value.size(), 0.0);
}

void SGD::step(double lr) {
  auto& params = registry_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (!p.trainable || !p.value.requires_grad() || !p.value.has_grad()) continue;
    const double wd = p.weight_decay_enabled ? weight_decay_ : 0.0;
    auto value = p.value.mutable_data();
    const auto grad = p.value.grad();
    auto& v = velocity_[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      v[k] = momentum_ * v[k] + lr * (grad[k] + wd * value[k]);
      value[k] -= v[k];
    }
  }
}

double learning_rate_at(const TrainConfig& cfg, std::size_t step) {
  double lr = cfg.learning_rate;
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
    const double t = static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    lr *= 0.1 + 0.9 * t;
  }
  if (static_cast<double>(step) > cfg.lr_drop_at * static_cast<double>(cfg.steps)) lr *= cfg.lr_drop_factor;
  return lr;
}

}  // namespace panet::harness
