#include "panet/feature_pyramid.hpp"

#include "panet/ops.hpp"

namespace panet {

Backbone::Backbone(ParameterRegistry& registry, std::array<std::size_t, 4> channels, bool batch_norm,
                   const std::string& prefix)
    : channels_(channels) {
  stem_ = ConvUnit(registry, prefix + ".stem", 3, channels[0], 3, 2, batch_norm, true);
  std::size_t in = channels[0];
  for (std::size_t s = 0; s < 4; ++s) {
    const std::string name = prefix + ".c" + std::to_string(s + 2);
    stages_[s][0] = ConvUnit(registry, name + ".conv1", in, channels[s], 3, 2, batch_norm, true);
    stages_[s][1] = ConvUnit(registry, name + ".conv2", channels[s], channels[s], 3, 1, batch_norm, true);
    in = channels[s];
  }
}

BackboneStages Backbone::forward(const Tensor& image, const NormContext& ctx) const {
  if (image.rank() != 4 || image.dim(1) != 3) {
    throw ContractError("backbone: expects [N,3,H,W], got " + shape_str(image.shape()));
  }
  if (image.dim(2) % 32 != 0 || image.dim(3) % 32 != 0) {
    throw ContractError("backbone: image size " + shape_str(image.shape()) + " not divisible by 32");
  }
  BackboneStages out;
  Tensor x = stem_(image, ctx);
  for (std::size_t s = 0; s < 4; ++s) {
    x = stages_[s][1](stages_[s][0](x, ctx), ctx);
    out.stage[s] = x;
  }
  return out;
}

std::size_t Backbone::stage_path_depth() const { return stages_.size() * stages_[0].size(); }

TopDownPath::TopDownPath(ParameterRegistry& registry, const std::array<std::size_t, 4>& stage_channels,
                         std::size_t pyramid_channels, bool batch_norm, const std::string& prefix)
    : channels_(pyramid_channels) {
  for (std::size_t i = 0; i < 4; ++i) {
    lateral_[i] = ConvUnit(registry, prefix + ".lateral" + std::to_string(i + 2), stage_channels[i],
                           pyramid_channels, 1, 1, batch_norm, false);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    smooth_[i] = ConvUnit(registry, prefix + ".smooth" + std::to_string(i + 2), pyramid_channels,
                          pyramid_channels, 3, 1, batch_norm, false);
  }
}

FeaturePyramid TopDownPath::forward(const BackboneStages& stages, const NormContext& ctx) const {
  FeaturePyramid p;
  p.level[3] = lateral_[3](stages.stage[3], ctx);
  for (int i = 2; i >= 0; --i) {
    const auto k = static_cast<std::size_t>(i);
    Tensor merged = add(lateral_[k](stages.stage[k], ctx), upsample_nearest2x(p.level[k + 1]));
    p.level[k] = smooth_[k](merged, ctx);
  }
  return p;
}

BottomUpBlock::BottomUpBlock(ParameterRegistry& registry, std::size_t channels, bool batch_norm,
                             const std::string& prefix) {
  down_ = ConvUnit(registry, prefix + ".down", channels, channels, 3, 2, batch_norm, true);
  fuse_ = ConvUnit(registry, prefix + ".fuse", channels, channels, 3, 1, batch_norm, true);
}

Tensor BottomUpBlock::forward(const Tensor& n_i, const Tensor& p_next, const NormContext& ctx) const {
  if (n_i.rank() != 4 || p_next.rank() != 4 || n_i.dim(0) != p_next.dim(0) || n_i.dim(1) != p_next.dim(1)) {
    throw ContractError("bottom_up_block: N_i " + shape_str(n_i.shape()) + " incompatible with P_next " +
                        shape_str(p_next.shape()));
  }
  if (n_i.dim(2) != 2 * p_next.dim(2) || n_i.dim(3) != 2 * p_next.dim(3)) {
    throw ContractError("bottom_up_block: N_i must be exactly twice the spatial size of P_next");
  }
  return fuse_(add(p_next, down_(n_i, ctx)), ctx);
}

BottomUpPath::BottomUpPath(ParameterRegistry& registry, std::size_t channels, bool batch_norm,
                           const std::string& prefix) {
  for (std::size_t i = 0; i < 3; ++i) {
    blocks_[i] = BottomUpBlock(registry, channels, batch_norm, prefix + ".n" + std::to_string(i + 3));
  }
}

AugmentedPyramid BottomUpPath::forward(const FeaturePyramid& p, const NormContext& ctx) const {
  AugmentedPyramid n;
  n.level[0] = p.level[0];
  for (std::size_t i = 0; i < 3; ++i) n.level[i + 1] = blocks_[i].forward(n.level[i], p.level[i + 1], ctx);
  return n;
}

}  // namespace panet
