#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "panet/heads.hpp"
#include "panet/ops.hpp"

namespace panet::harness {

/// Training and model configuration. Every field has a key in the flat
/// key=value format; see config_keys().
struct TrainConfig {
  std::uint64_t seed = 7;
  std::size_t steps = 2000;
  double learning_rate = 0.01;
  std::size_t warmup_steps = 100;
  double lr_drop_at = 0.75;  // fraction of steps
  double lr_drop_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  std::size_t images_per_step = 2;
  std::size_t rois_per_image = 64;
  double positive_fraction = 0.25;

  std::size_t train_scenes = 500;
  std::size_t eval_scenes = 100;
  std::uint64_t eval_seed = 1009;
  std::size_t image_size = 64;
  std::size_t max_instances = 3;
  double proposal_jitter = 0.2;
  std::size_t proposal_copies = 4;
  std::size_t proposal_negatives = 12;
  double eval_jitter = 0.1;

  std::array<std::size_t, 4> backbone_channels{16, 32, 64, 128};
  bool backbone_freeze = false;
  std::size_t pyramid_channels = 32;
  std::size_t box_hidden_dim = 128;
  std::size_t mask_conv_channels = 32;
  std::size_t num_classes = 2;
  double level_reference = 56.0;
  std::size_t sampling_ratio = 2;

  // Ablation switches.
  bool bpa = true;  // bottom-up path augmentation
  bool afp = true;  // adaptive feature pooling
  bool ff = true;   // fully-connected mask fusion
  bool mbn = true;  // synchronized batch norm
  BoxVariant box_variant = BoxVariant::kTwoFc;  // kHeavier is the HHD switch

  FuseMode box_fusion_mode = FuseMode::kMax;
  FusionPlacement fusion_placement = FusionPlacement::kAfterFirst;
  FuseMode mask_fusion_mode = FuseMode::kMax;
  BranchStart mask_fc_branch_start = BranchStart::kConv3;
  FuseMode mask_fc_fusion_op = FuseMode::kSum;
  bool per_level_params = false;
  bool sync_bn_everywhere = true;
  std::size_t sync_bn_shards = 2;

  std::size_t log_every = 0;  // 0 disables progress logging

  bool hhd() const { return box_variant == BoxVariant::kHeavier; }

  /// Throws ConfigError on non-positive counts and inconsistent settings.
  void validate() const;
};

/// Applies one key=value assignment. Unknown keys and malformed values throw ConfigError.
void apply_setting(TrainConfig& cfg, std::string_view key, std::string_view value);
/// Parses "key=value" lines; blank lines and '#' comments are ignored.
TrainConfig parse_config(std::string_view text, TrainConfig base = {});
TrainConfig load_config(const std::string& path);
/// Canonical text form; parse_config(to_text(c)) reproduces c.
std::string to_text(const TrainConfig& cfg);
std::vector<std::string> config_keys();

}  // namespace panet::harness
