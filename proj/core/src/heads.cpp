#include "panet/heads.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace panet {

BoxVariant parse_box_variant(std::string_view name) {
  if (name == "two_fc") return BoxVariant::kTwoFc;
  if (name == "heavier") return BoxVariant::kHeavier;
  throw ConfigError("unknown box variant '" + std::string(name) + "' (two_fc|heavier)");
}

FusionPlacement parse_fusion_placement(std::string_view name) {
  if (name == "before_fc1" || name == "before_first") return FusionPlacement::kBeforeFirst;
  if (name == "after_fc1" || name == "after_first") return FusionPlacement::kAfterFirst;
  throw ConfigError("unknown fusion placement '" + std::string(name) + "' (before_fc1|after_fc1)");
}

BranchStart parse_branch_start(std::string_view name) {
  if (name == "conv2") return BranchStart::kConv2;
  if (name == "conv3") return BranchStart::kConv3;
  if (name == "conv4") return BranchStart::kConv4;
  throw ConfigError("unknown fc branch start '" + std::string(name) + "' (conv2|conv3|conv4)");
}

std::string_view to_string(BoxVariant v) { return v == BoxVariant::kTwoFc ? "two_fc" : "heavier"; }

std::string_view to_string(FusionPlacement p) {
  return p == FusionPlacement::kBeforeFirst ? "before_fc1" : "after_fc1";
}

std::string_view to_string(BranchStart s) {
  switch (s) {
    case BranchStart::kConv2: return "conv2";
    case BranchStart::kConv3: return "conv3";
    case BranchStart::kConv4: return "conv4";
  }
  return "?";
}

namespace {

void check_grids(const std::vector<Tensor>& grids, std::size_t levels, std::size_t channels, std::size_t size,
                 const char* who) {
  if (grids.size() != levels) {
    throw ContractError(std::string(who) + ": expected " + std::to_string(levels) + " grids, got " +
                        std::to_string(grids.size()));
  }
  for (const auto& g : grids) {
    if (g.rank() != 4 || g.dim(1) != channels || g.dim(2) != size || g.dim(3) != size ||
        g.dim(0) != grids[0].dim(0)) {
      throw ContractError(std::string(who) + ": grid shape " + shape_str(g.shape()) + " does not match [R," +
                          std::to_string(channels) + "," + std::to_string(size) + "," + std::to_string(size) + "]");
    }
  }
}

// Number of distinct first-layer parameter sets to create.
std::size_t first_layer_sets(bool per_level, FusionPlacement placement, std::size_t levels) {
  return (per_level && placement == FusionPlacement::kAfterFirst) ? levels : 1;
}

}  // namespace

BoxHead::BoxHead(ParameterRegistry& registry, const BoxHeadConfig& cfg, const std::string& prefix) : cfg_(cfg) {
  if (cfg.num_levels != 1 && cfg.num_levels != 4) throw ConfigError("box head: num_levels must be 1 or 4");
  const std::size_t sets = first_layer_sets(cfg.per_level_params, cfg.fusion_placement, cfg.num_levels);
  const std::size_t flat = cfg.in_channels * cfg.pooled_size * cfg.pooled_size;
  if (cfg.variant == BoxVariant::kTwoFc) {
    for (std::size_t i = 0; i < sets; ++i) {
      const std::string name = sets == 1 ? prefix + ".fc1" : prefix + ".fc1_l" + std::to_string(i + 2);
      fc1_.emplace_back(registry, name, flat, cfg.hidden_dim);
    }
    fc2_ = Linear(registry, prefix + ".fc2", cfg.hidden_dim, cfg.hidden_dim);
  } else {
    for (std::size_t i = 0; i < sets; ++i) {
      const std::string name = sets == 1 ? prefix + ".conv1" : prefix + ".conv1_l" + std::to_string(i + 2);
      first_convs_.emplace_back(registry, name, cfg.in_channels, cfg.in_channels, 3, 1, cfg.batch_norm, true);
    }
    for (int i = 2; i <= 4; ++i) {
      convs_.emplace_back(registry, prefix + ".conv" + std::to_string(i), cfg.in_channels, cfg.in_channels, 3, 1,
                          cfg.batch_norm, true);
    }
    fc2_ = Linear(registry, prefix + ".fc", flat, cfg.hidden_dim);
  }
  cls_ = Linear(registry, prefix + ".cls", cfg.hidden_dim, cfg.num_classes + 1, Init::kNormal001);
  bbox_ = Linear(registry, prefix + ".bbox", cfg.hidden_dim, 4 * cfg.num_classes, Init::kNormal0001);
}

std::size_t BoxHead::convs_before_predictors() const {
  return cfg_.variant == BoxVariant::kHeavier ? 1 + convs_.size() : 0;
}

std::size_t BoxHead::first_layer_instances() const {
  return cfg_.variant == BoxVariant::kTwoFc ? fc1_.size() : first_convs_.size();
}

const Tensor& BoxHead::first_layer_weight(std::size_t level) const {
  return cfg_.variant == BoxVariant::kTwoFc ? fc1_.at(level).weight() : first_convs_.at(level).weight();
}

Tensor BoxHead::first_layer(const Tensor& x, std::size_t level, const NormContext& ctx) const {
  if (cfg_.variant == BoxVariant::kTwoFc) {
    const Linear& fc = fc1_.size() == 1 ? fc1_[0] : fc1_[level];
    return relu(fc(flatten(x)));
  }
  const ConvUnit& conv = first_convs_.size() == 1 ? first_convs_[0] : first_convs_[level];
  return conv(x, ctx);
}

BoxPrediction BoxHead::forward(const std::vector<Tensor>& grids, const NormContext& ctx, HeadTrace* trace) const {
  check_grids(grids, cfg_.num_levels, cfg_.in_channels, cfg_.pooled_size, "box head");

  Tensor x;
  if (grids.size() == 1) {
    x = first_layer(grids[0], 0, ctx);
  } else if (cfg_.fusion_placement == FusionPlacement::kBeforeFirst) {
    if (trace) trace->fusion_inputs = grids;
    x = first_layer(elementwise_fuse(grids, cfg_.fusion_mode), 0, ctx);
  } else {
    std::vector<Tensor> branches;
    for (std::size_t l = 0; l < grids.size(); ++l) branches.push_back(first_layer(grids[l], l, ctx));
    if (trace) trace->fusion_inputs = branches;
    x = elementwise_fuse(branches, cfg_.fusion_mode);
  }

  if (cfg_.variant == BoxVariant::kTwoFc) {
    x = relu(fc2_(x));
  } else {
    for (const auto& conv : convs_) x = conv(x, ctx);
    x = relu(fc2_(flatten(x)));
  }
  return {cls_(x), bbox_(x)};
}

MaskHead::MaskHead(ParameterRegistry& registry, const MaskHeadConfig& cfg, const std::string& prefix) : cfg_(cfg) {
  if (cfg.num_levels != 1 && cfg.num_levels != 4) throw ConfigError("mask head: num_levels must be 1 or 4");
  if (cfg.conv_channels < 2) throw ConfigError("mask head: conv_channels must be >= 2");
  const std::size_t sets = first_layer_sets(cfg.per_level_params, cfg.fusion_placement, cfg.num_levels);
  const std::size_t c = cfg.conv_channels;
  for (std::size_t i = 0; i < sets; ++i) {
    const std::string name = sets == 1 ? prefix + ".conv1" : prefix + ".conv1_l" + std::to_string(i + 2);
    first_convs_.emplace_back(registry, name, cfg.in_channels, c, 3, 1, cfg.batch_norm, true);
  }
  for (int i = 2; i <= 4; ++i) {
    convs_.emplace_back(registry, prefix + ".conv" + std::to_string(i), c, c, 3, 1, cfg.batch_norm, true);
  }
  deconv_weight_ = registry.create(prefix + ".deconv.weight", {c, c, 2, 2}, Init::kHeNormal);
  deconv_bias_ = registry.create(prefix + ".deconv.bias", {c}, Init::kZeros);
  predictor_ = ConvUnit(registry, prefix + ".predictor", c, cfg.num_classes, 1, 1, false, false);
  if (cfg.fc_branch) {
    branch_conv_a_ = ConvUnit(registry, prefix + ".fc_branch.conv1", c, c, 3, 1, cfg.batch_norm, true);
    branch_conv_b_ = ConvUnit(registry, prefix + ".fc_branch.conv2", c, c / 2, 3, 1, cfg.batch_norm, true);
    branch_fc_ = Linear(registry, prefix + ".fc_branch.fc", (c / 2) * cfg.pooled_size * cfg.pooled_size,
                        cfg.mask_size() * cfg.mask_size(), Init::kNormal001);
  }
}

std::size_t MaskHead::fc_output_size() const {
  return cfg_.fc_branch ? branch_fc_.weight().dim(0) : 0;
}

std::size_t MaskHead::fc_branch_reduced_channels() const {
  return cfg_.fc_branch ? branch_conv_b_.out_channels() : 0;
}

std::vector<Tensor> MaskHead::fc_branch_parameters() const {
  if (!cfg_.fc_branch) return {};
  std::vector<Tensor> out = {branch_conv_a_.weight(), branch_conv_b_.weight(), branch_fc_.weight()};
  if (branch_conv_a_.bias().defined()) out.push_back(branch_conv_a_.bias());
  if (branch_conv_b_.bias().defined()) out.push_back(branch_conv_b_.bias());
  return out;
}

MaskPrediction MaskHead::forward(const std::vector<Tensor>& grids, const NormContext& ctx, HeadTrace* trace) const {
  check_grids(grids, cfg_.num_levels, cfg_.in_channels, cfg_.pooled_size, "mask head");

  auto conv1 = [&](const Tensor& g, std::size_t level) {
    return (first_convs_.size() == 1 ? first_convs_[0] : first_convs_[level])(g, ctx);
  };

  Tensor x;
  if (grids.size() == 1) {
    x = conv1(grids[0], 0);
  } else if (cfg_.fusion_placement == FusionPlacement::kBeforeFirst) {
    if (trace) trace->fusion_inputs = grids;
    x = conv1(elementwise_fuse(grids, cfg_.fusion_mode), 0);
  } else {
    std::vector<Tensor> branches;
    for (std::size_t l = 0; l < grids.size(); ++l) branches.push_back(conv1(grids[l], l));
    if (trace) trace->fusion_inputs = branches;
    x = elementwise_fuse(branches, cfg_.fusion_mode);
  }

  Tensor tap;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    x = convs_[i](x, ctx);
    if (static_cast<int>(i) + 2 == static_cast<int>(cfg_.fc_branch_start)) tap = x;
  }

  MaskPrediction out;
  Tensor up = relu(conv_transpose2d(x, deconv_weight_, deconv_bias_, 2, 0));
  out.per_class_logits = predictor_(up, ctx);
  if (!cfg_.fc_branch) {
    out.fused_logits = out.per_class_logits;
    return out;
  }
  Tensor b = branch_conv_b_(branch_conv_a_(tap, ctx), ctx);
  const std::size_t m = cfg_.mask_size();
  out.fg_logits = reshape(branch_fc_(flatten(b)), {b.dim(0), 1, m, m});
  out.fused_logits = broadcast_channel_fuse(out.per_class_logits, out.fg_logits, cfg_.fc_fusion_op);
  return out;
}

RoI decode_box_deltas(const RoI& roi, const BoxDeltas& deltas, double image_width, double image_height) {
  const double w = roi.width(), h = roi.height();
  const double cx = roi.x0 + 0.5 * w + deltas[0] * w;
  const double cy = roi.y0 + 0.5 * h + deltas[1] * h;
  const double pw = w * std::exp(std::clamp(deltas[2], -kMaxLogScale, kMaxLogScale));
  const double ph = h * std::exp(std::clamp(deltas[3], -kMaxLogScale, kMaxLogScale));

  constexpr double kMinSide = 1e-3;
  auto clip_axis = [](double lo, double hi, double limit) {
    lo = std::clamp(lo, 0.0, limit);
    hi = std::clamp(hi, 0.0, limit);
    if (hi - lo < kMinSide) {
      const double mid = std::clamp(0.5 * (lo + hi), 0.5 * kMinSide, limit - 0.5 * kMinSide);
      lo = mid - 0.5 * kMinSide;
      hi = mid + 0.5 * kMinSide;
    }
    return std::pair{lo, hi};
  };
  RoI out = roi;
  std::tie(out.x0, out.x1) = clip_axis(cx - 0.5 * pw, cx + 0.5 * pw, image_width);
  std::tie(out.y0, out.y1) = clip_axis(cy - 0.5 * ph, cy + 0.5 * ph, image_height);
  return out;
}

BoxDeltas encode_box_deltas(const RoI& target, const RoI& roi) {
  const double w = roi.width(), h = roi.height();
  const double cx = roi.x0 + 0.5 * w, cy = roi.y0 + 0.5 * h;
  const double tcx = target.x0 + 0.5 * target.width(), tcy = target.y0 + 0.5 * target.height();
  return {(tcx - cx) / w, (tcy - cy) / h, std::log(target.width() / w), std::log(target.height() / h)};
}

}  // namespace panet
