#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "panet/feature_pyramid.hpp"
#include "panet/harness/config.hpp"
#include "panet/harness/scene.hpp"
#include "panet/heads.hpp"
#include "panet/nn.hpp"
#include "panet/roi_pooling.hpp"

namespace panet::harness {

/// Backbone, top-down pyramid, optional bottom-up path, box and mask heads,
/// wired according to the ablation switches of a TrainConfig. With every
/// switch off this is a plain FPN Mask R-CNN style model.
class PANetModel {
 public:
  explicit PANetModel(const TrainConfig& cfg);
  PANetModel(const PANetModel&) = delete;
  PANetModel& operator=(const PANetModel&) = delete;

  /// [N,3,H,W] batch from scenes, normalised around zero.
  static Tensor image_batch(std::span<const SyntheticScene* const> scenes);

  /// Feature maps the heads pool from: N2..N5 with the bottom-up path, else P2..P5.
  std::array<Tensor, 4> features(const Tensor& images, const NormContext& ctx) const;

  /// Copies of `rois` with assigned_level filled in.
  std::vector<RoI> assign_levels(std::span<const RoI> rois) const;

  /// Pooled grids: one per level with adaptive pooling, else the single assigned-level grid.
  std::vector<Tensor> pool(const std::array<Tensor, 4>& levels, std::span<const RoI> rois,
                           std::size_t out_size) const;

  BoxPrediction box_forward(const std::array<Tensor, 4>& levels, std::span<const RoI> rois, const NormContext& ctx,
                            HeadTrace* trace = nullptr) const;
  MaskPrediction mask_forward(const std::array<Tensor, 4>& levels, std::span<const RoI> rois, const NormContext& ctx,
                              HeadTrace* trace = nullptr) const;

  /// Norm context for the image batch: images split evenly over the shards.
  NormContext image_context(std::size_t images, bool training) const;
  /// Norm context for RoI rows: each RoI follows the shard of its image.
  NormContext roi_context(std::span<const RoI> rois, std::size_t images, bool training) const;

  ParameterRegistry& registry() { return registry_; }
  const ParameterRegistry& registry() const { return registry_; }
  const TrainConfig& config() const { return cfg_; }
  const Backbone& backbone() const { return *backbone_; }
  const TopDownPath& top_down() const { return *top_down_; }
  const BottomUpPath* bottom_up() const { return bottom_up_ ? &*bottom_up_ : nullptr; }
  const BoxHead& box_head() const { return *box_head_; }
  const MaskHead& mask_head() const { return *mask_head_; }

 private:
  std::size_t shard_of(std::size_t image, std::size_t images) const;

  TrainConfig cfg_;
  ParameterRegistry registry_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<TopDownPath> top_down_;
  std::optional<BottomUpPath> bottom_up_;
  std::unique_ptr<BoxHead> box_head_;
  std::unique_ptr<MaskHead> mask_head_;
};

}  // namespace panet::harness
