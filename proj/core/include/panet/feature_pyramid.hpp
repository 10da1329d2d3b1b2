#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "panet/nn.hpp"
#include "panet/tensor.hpp"

namespace panet {

inline constexpr std::array<std::size_t, 4> kLevelStrides = {4, 8, 16, 32};
inline constexpr int kMinLevel = 2;
inline constexpr int kMaxLevel = 5;

/// C2..C5 at strides 4/8/16/32.
struct BackboneStages {
  std::array<Tensor, 4> stage;
};

/// Top-down FPN output P2..P5, one shared channel width.
struct FeaturePyramid {
  std::array<Tensor, 4> level;
};

/// Bottom-up augmented pyramid N2..N5. N2 is P2 itself.
struct AugmentedPyramid {
  std::array<Tensor, 4> level;
};

/// Small trainable trunk standing in for a ResNet: a strided stem followed by
/// four stages of two 3x3 conv+ReLU, the first strided.
class Backbone {
 public:
  Backbone(ParameterRegistry& registry, std::array<std::size_t, 4> channels, bool batch_norm,
           const std::string& prefix = "backbone");

  BackboneStages forward(const Tensor& image, const NormContext& ctx) const;

  /// Weighted layers from the input of the C2 stage to C5.
  std::size_t stage_path_depth() const;
  const std::array<std::size_t, 4>& channels() const { return channels_; }

 private:
  std::array<std::size_t, 4> channels_;
  ConvUnit stem_;
  std::array<std::array<ConvUnit, 2>, 4> stages_;
};

/// P5 = lateral(C5); P_i = smooth(lateral(C_i) + up2(P_{i+1})). No nonlinearity,
/// following the usual FPN construction.
class TopDownPath {
 public:
  TopDownPath(ParameterRegistry& registry, const std::array<std::size_t, 4>& stage_channels,
              std::size_t pyramid_channels, bool batch_norm, const std::string& prefix = "fpn");

  FeaturePyramid forward(const BackboneStages& stages, const NormContext& ctx) const;
  std::size_t channels() const { return channels_; }

 private:
  std::size_t channels_;
  std::array<ConvUnit, 4> lateral_;
  std::array<ConvUnit, 3> smooth_;  // for P2..P4
};

/// One augmentation step: N_{i+1} = relu(conv3x3(P_{i+1} + relu(conv3x3_s2(N_i)))).
class BottomUpBlock {
 public:
  BottomUpBlock() = default;
  BottomUpBlock(ParameterRegistry& registry, std::size_t channels, bool batch_norm, const std::string& prefix);

  Tensor forward(const Tensor& n_i, const Tensor& p_next, const NormContext& ctx) const;
  static constexpr std::size_t kWeightedLayers = 2;

  const ConvUnit& downsample() const { return down_; }
  const ConvUnit& fuse() const { return fuse_; }

 private:
  ConvUnit down_;
  ConvUnit fuse_;
};

/// N2 := P2, then three bottom-up blocks reaching N5.
class BottomUpPath {
 public:
  BottomUpPath(ParameterRegistry& registry, std::size_t channels, bool batch_norm,
               const std::string& prefix = "bottom_up");

  AugmentedPyramid forward(const FeaturePyramid& p, const NormContext& ctx) const;
  /// Weighted layers traversed from N2 to N5.
  std::size_t path_depth() const { return blocks_.size() * BottomUpBlock::kWeightedLayers; }
  const std::array<BottomUpBlock, 3>& blocks() const { return blocks_; }

 private:
  std::array<BottomUpBlock, 3> blocks_;
};

}  // namespace panet
