#include "panet/harness/model.hpp"

#include <algorithm>

namespace panet::harness {

namespace {

constexpr double kPixelMean = 0.5;
constexpr double kPixelScale = 4.0;
constexpr std::size_t kBoxPooled = 7;
constexpr std::size_t kMaskPooled = 14;

}  // namespace

PANetModel::PANetModel(const TrainConfig& cfg) : cfg_(cfg), registry_(cfg.seed) {
  cfg_.validate();
  const bool bn_backbone = cfg_.mbn;
  const bool bn_new = cfg_.mbn && cfg_.sync_bn_everywhere;
  backbone_ = std::make_unique<Backbone>(registry_, cfg_.backbone_channels, bn_backbone);
  top_down_ = std::make_unique<TopDownPath>(registry_, cfg_.backbone_channels, cfg_.pyramid_channels, bn_new);
  if (cfg_.bpa) bottom_up_.emplace(registry_, cfg_.pyramid_channels, bn_new);

  BoxHeadConfig box;
  box.variant = cfg_.box_variant;
  box.fusion_mode = cfg_.box_fusion_mode;
  box.fusion_placement = cfg_.fusion_placement;
  box.in_channels = cfg_.pyramid_channels;
  box.pooled_size = kBoxPooled;
  box.hidden_dim = cfg_.box_hidden_dim;
  box.num_classes = cfg_.num_classes;
  box.num_levels = cfg_.afp ? 4 : 1;
  box.per_level_params = cfg_.per_level_params;
  box.batch_norm = bn_new;
  box_head_ = std::make_unique<BoxHead>(registry_, box);

  MaskHeadConfig mask;
  mask.fusion_mode = cfg_.mask_fusion_mode;
  mask.fusion_placement = cfg_.fusion_placement;
  mask.fc_branch_start = cfg_.mask_fc_branch_start;
  mask.fc_fusion_op = cfg_.mask_fc_fusion_op;
  mask.fc_branch = cfg_.ff;
  mask.in_channels = cfg_.pyramid_channels;
  mask.conv_channels = cfg_.mask_conv_channels;
  mask.pooled_size = kMaskPooled;
  mask.num_classes = cfg_.num_classes;
  mask.num_levels = cfg_.afp ? 4 : 1;
  mask.per_level_params = cfg_.per_level_params;
  mask.batch_norm = bn_new;
  mask_head_ = std::make_unique<MaskHead>(registry_, mask);

  if (cfg_.backbone_freeze) registry_.freeze_prefix("backbone.");
}

Tensor PANetModel::image_batch(std::span<const SyntheticScene* const> scenes) {
  if (scenes.empty()) throw ContractError("image_batch: no scenes");
  const std::size_t h = scenes[0]->height, w = scenes[0]->width;
  std::vector<double> values;
  values.reserve(scenes.size() * 3 * h * w);
  for (const SyntheticScene* s : scenes) {
    if (s->height != h || s->width != w) throw ContractError("image_batch: scenes differ in size");
    for (double v : s->image.data()) values.push_back((v - kPixelMean) * kPixelScale);
  }
  return Tensor::from({scenes.size(), 3, h, w}, std::move(values));
}

std::array<Tensor, 4> PANetModel::features(const Tensor& images, const NormContext& ctx) const {
  const FeaturePyramid p = top_down_->forward(backbone_->forward(images, ctx), ctx);
  if (!bottom_up_) return p.level;
  return bottom_up_->forward(p, ctx).level;
}

std::vector<RoI> PANetModel::assign_levels(std::span<const RoI> rois) const {
  std::vector<RoI> out(rois.begin(), rois.end());
  for (RoI& r : out) r.assigned_level = assign_level(r, cfg_.level_reference);
  return out;
}

std::vector<Tensor> PANetModel::pool(const std::array<Tensor, 4>& levels, std::span<const RoI> rois,
                                     std::size_t out_size) const {
  const RoIAlignParams params{out_size, cfg_.sampling_ratio};
  if (cfg_.afp) return adaptive_pool(levels, rois, params).as_list();
  return {single_level_pool(levels, rois, params)};
}

BoxPrediction PANetModel::box_forward(const std::array<Tensor, 4>& levels, std::span<const RoI> rois,
                                      const NormContext& ctx, HeadTrace* trace) const {
  const auto routed = assign_levels(rois);
  return box_head_->forward(pool(levels, routed, kBoxPooled), ctx, trace);
}

MaskPrediction PANetModel::mask_forward(const std::array<Tensor, 4>& levels, std::span<const RoI> rois,
                                        const NormContext& ctx, HeadTrace* trace) const {
  const auto routed = assign_levels(rois);
  return mask_head_->forward(pool(levels, routed, kMaskPooled), ctx, trace);
}

std::size_t PANetModel::shard_of(std::size_t image, std::size_t images) const {
  const std::size_t shards = std::min(cfg_.sync_bn_shards, images);
  return image * shards / images;
}

NormContext PANetModel::image_context(std::size_t images, bool training) const {
  NormContext ctx;
  ctx.training = training;
  const std::size_t shards = std::min(cfg_.sync_bn_shards, images);
  ctx.shard_rows.assign(shards, 0);
  for (std::size_t i = 0; i < images; ++i) ++ctx.shard_rows[shard_of(i, images)];
  return ctx;
}

NormContext PANetModel::roi_context(std::span<const RoI> rois, std::size_t images, bool training) const {
  NormContext ctx;
  ctx.training = training;
  const std::size_t shards = std::min(cfg_.sync_bn_shards, images);
  std::vector<std::size_t> rows(shards, 0);
  for (std::size_t i = 0; i < rois.size(); ++i) {
    const std::size_t s = shard_of(rois[i].image, images);
    if (i > 0 && s < shard_of(rois[i - 1].image, images)) {
      throw ContractError("roi_context: rois must be grouped by image in shard order");
    }
    ++rows[s];
  }
  for (std::size_t r : rows) {
    if (r > 0) ctx.shard_rows.push_back(r);
  }
  return ctx;
}

}  // namespace panet::harness
