#include "panet/nn.hpp"

#include <algorithm>
#include <cmath>

#include "panet/ops.hpp"
#include "panet/sync_bn.hpp"

namespace panet {

Tensor ParameterRegistry::create(const std::string& name, Shape shape, Init init, bool weight_decay) {
  if (find(name)) throw ContractError("parameter registered twice: " + name);
  std::vector<double> values(numel(shape), 0.0);
  switch (init) {
    case Init::kZeros: break;
    case Init::kOnes: std::fill(values.begin(), values.end(), 1.0); break;
    case Init::kHeNormal: {
      // fan_in = product of all but the leading (output) axis
      const std::size_t fan_in = shape.empty() ? 1 : values.size() / shape[0];
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (double& v : values) v = dist(rng_);
      break;
    }
    case Init::kNormal001: {
      std::normal_distribution<double> dist(0.0, 0.01);
      for (double& v : values) v = dist(rng_);
      break;
    }
    case Init::kNormal0001: {
      std::normal_distribution<double> dist(0.0, 0.001);
      for (double& v : values) v = dist(rng_);
      break;
    }
  }
  Tensor t = Tensor::from(std::move(shape), std::move(values), true);
  params_.push_back({name, t, weight_decay, true});
  return t;
}

Tensor ParameterRegistry::create_buffer(const std::string& name, Shape shape, double fill) {
  if (find(name)) throw ContractError("parameter registered twice: " + name);
  Tensor t = Tensor::full(std::move(shape), fill, false);
  params_.push_back({name, t, false, false});
  return t;
}

const Parameter* ParameterRegistry::find(const std::string& name) const {
  auto it = std::find_if(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

std::size_t ParameterRegistry::trainable_count() const {
  return static_cast<std::size_t>(
      std::count_if(params_.begin(), params_.end(), [](const Parameter& p) { return p.trainable; }));
}

void ParameterRegistry::zero_grad() {
  for (auto& p : params_) {
    if (p.trainable) p.value.zero_grad();
  }
}

void ParameterRegistry::freeze_prefix(const std::string& prefix) {
  for (auto& p : params_) {
    if (p.name.rfind(prefix, 0) == 0 && p.trainable) {
      p.trainable = false;
      p.value.set_requires_grad(false);
    }
  }
}

ConvUnit::ConvUnit(ParameterRegistry& registry, const std::string& name, std::size_t in_channels,
                   std::size_t out_channels, std::size_t kernel, std::size_t stride, bool batch_norm,
                   bool relu)
    : stride_(stride), pad_((kernel - 1) / 2), relu_(relu) {
  weight_ = registry.create(name + ".weight", {out_channels, in_channels, kernel, kernel}, Init::kHeNormal);
  if (batch_norm) {
    norm_ = std::make_shared<BatchNorm>(registry, name + ".bn", out_channels);
  } else {
    bias_ = registry.create(name + ".bias", {out_channels}, Init::kZeros);
  }
}

Tensor ConvUnit::operator()(const Tensor& x, const NormContext& ctx) const {
  Tensor y = conv2d(x, weight_, bias_, stride_, pad_);
  if (norm_) y = (*norm_)(y, ctx);
  return relu_ ? relu(y) : y;
}

Linear::Linear(ParameterRegistry& registry, const std::string& name, std::size_t in, std::size_t out,
               Init init) {
  weight_ = registry.create(name + ".weight", {out, in}, init);
  bias_ = registry.create(name + ".bias", {out}, Init::kZeros);
}

Tensor Linear::operator()(const Tensor& x) const { return linear(x, weight_, bias_); }

}  // namespace panet
