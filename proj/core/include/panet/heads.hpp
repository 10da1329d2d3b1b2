#pragma once

#include <array>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "panet/nn.hpp"
#include "panet/ops.hpp"
#include "panet/roi_pooling.hpp"
#include "panet/tensor.hpp"

namespace panet {

enum class BoxVariant { kTwoFc, kHeavier };

/// Where per-level grids are fused: before the first parameter layer
/// ("fu.fc1fc2") or after it ("fc1fu.fc2").
enum class FusionPlacement { kBeforeFirst, kAfterFirst };

/// Mask conv whose output feeds the fully-connected branch.
enum class BranchStart { kConv2 = 2, kConv3 = 3, kConv4 = 4 };

BoxVariant parse_box_variant(std::string_view name);
FusionPlacement parse_fusion_placement(std::string_view name);
BranchStart parse_branch_start(std::string_view name);
std::string_view to_string(BoxVariant v);
std::string_view to_string(FusionPlacement p);
std::string_view to_string(BranchStart s);

struct BoxHeadConfig {
  BoxVariant variant = BoxVariant::kTwoFc;
  FuseMode fusion_mode = FuseMode::kMax;
  FusionPlacement fusion_placement = FusionPlacement::kAfterFirst;
  std::size_t in_channels = 32;
  std::size_t pooled_size = 7;
  std::size_t hidden_dim = 128;
  std::size_t num_classes = 2;
  /// Grids per proposal: 4 with adaptive feature pooling, 1 for FPN routing.
  std::size_t num_levels = 4;
  /// Distinct first-layer parameters per level instead of one shared set.
  bool per_level_params = false;
  bool batch_norm = false;
};

struct BoxPrediction {
  Tensor class_logits;  // [R, K+1], column 0 is background
  Tensor box_deltas;    // [R, 4K]
};

/// Inputs to the fusion op, one per level, recorded for source statistics.
struct HeadTrace {
  std::vector<Tensor> fusion_inputs;
};

class BoxHead {
 public:
  BoxHead(ParameterRegistry& registry, const BoxHeadConfig& cfg, const std::string& prefix = "box_head");

  BoxPrediction forward(const std::vector<Tensor>& grids, const NormContext& ctx, HeadTrace* trace = nullptr) const;

  const BoxHeadConfig& config() const { return cfg_; }
  /// 3x3 convs between pooling and the predictors (4 for the heavier head).
  std::size_t convs_before_predictors() const;
  /// Parameter sets used by the first layer (1 when shared).
  std::size_t first_layer_instances() const;
  const Tensor& first_layer_weight(std::size_t level = 0) const;

 private:
  Tensor first_layer(const Tensor& x, std::size_t level, const NormContext& ctx) const;

  BoxHeadConfig cfg_;
  std::vector<Linear> fc1_;        // two-fc: one per level or shared
  Linear fc2_;                     // two-fc second layer / heavier final fc
  std::vector<ConvUnit> first_convs_;  // heavier: conv1, per level or shared
  std::vector<ConvUnit> convs_;        // heavier: conv2..conv4
  Linear cls_;
  Linear bbox_;
};

struct MaskHeadConfig {
  FuseMode fusion_mode = FuseMode::kMax;
  FusionPlacement fusion_placement = FusionPlacement::kAfterFirst;
  BranchStart fc_branch_start = BranchStart::kConv3;
  FuseMode fc_fusion_op = FuseMode::kSum;
  /// Fully-connected fusion branch on/off.
  bool fc_branch = true;
  std::size_t in_channels = 32;
  std::size_t conv_channels = 32;
  std::size_t pooled_size = 14;
  std::size_t num_classes = 2;
  std::size_t num_levels = 4;
  bool per_level_params = false;
  bool batch_norm = false;

  std::size_t mask_size() const { return 2 * pooled_size; }
};

struct MaskPrediction {
  Tensor per_class_logits;  // [R, K, M, M] from the FCN path
  Tensor fg_logits;         // [R, 1, M, M] from the fc path; undefined without it
  Tensor fused_logits;      // [R, K, M, M]
};

class MaskHead {
 public:
  MaskHead(ParameterRegistry& registry, const MaskHeadConfig& cfg, const std::string& prefix = "mask_head");

  MaskPrediction forward(const std::vector<Tensor>& grids, const NormContext& ctx, HeadTrace* trace = nullptr) const;

  const MaskHeadConfig& config() const { return cfg_; }
  std::size_t fcn_conv_count() const { return 1 + convs_.size(); }
  std::size_t fcn_deconv_count() const { return 1; }
  /// Output width of the fc layer (mask_size^2).
  std::size_t fc_output_size() const;
  /// Channels of the second fc-branch conv.
  std::size_t fc_branch_reduced_channels() const;
  /// Parameters of the fc branch (convs and fc), for ablation tests.
  std::vector<Tensor> fc_branch_parameters() const;
  const Tensor& first_layer_weight(std::size_t level = 0) const { return first_convs_.at(level).weight(); }

 private:
  MaskHeadConfig cfg_;
  std::vector<ConvUnit> first_convs_;
  std::vector<ConvUnit> convs_;  // conv2..conv4
  Tensor deconv_weight_;
  Tensor deconv_bias_;
  ConvUnit predictor_;
  ConvUnit branch_conv_a_;
  ConvUnit branch_conv_b_;
  Linear branch_fc_;
};

/// Class-specific regression parameterization: (dx, dy, dw, dh) relative to the
/// box centre and size. dw and dh are clamped to log(1000/16) before exp.
using BoxDeltas = std::array<double, 4>;

inline constexpr double kMaxLogScale = 4.135166556742356;  // log(1000/16)

RoI decode_box_deltas(const RoI& roi, const BoxDeltas& deltas, double image_width, double image_height);
BoxDeltas encode_box_deltas(const RoI& target, const RoI& roi);

}  // namespace panet
