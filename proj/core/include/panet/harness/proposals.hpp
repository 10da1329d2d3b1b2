#pragma once

#include <cstdint>
#include <vector>

#include "panet/harness/scene.hpp"
#include "panet/heads.hpp"
#include "panet/roi_pooling.hpp"

namespace panet::harness {

inline constexpr std::size_t kMaskSize = 28;

struct ProposalOptions {
  double jitter = 0.2;
  std::size_t jittered_per_gt = 4;
  std::size_t negatives_per_gt = 12;
};

/// Proposals stand in for an RPN: the GT boxes themselves, jittered copies
/// (centre shift and size scale drawn uniformly within +-jitter), and background
/// boxes near and away from the objects. All clipped to the image. Evaluation
/// passes include_gt = false so exact GT boxes are not handed to the model.
std::vector<RoI> make_proposals(const SyntheticScene& scene, std::uint64_t seed, double jitter,
                                std::size_t negatives_per_gt, std::size_t jittered_per_gt = 4,
                                bool include_gt = true);

/// Jittered copies of one box, clipped to the image.
std::vector<RoI> jitter_box(const RoI& box, std::uint64_t seed, double jitter, std::size_t copies,
                            double image_width, double image_height);

struct RoiBatch {
  std::vector<RoI> rois;
  std::vector<int> labels;               // 0 = background
  std::vector<BoxDeltas> box_targets;    // meaningful for positives only
  std::vector<std::size_t> positive_rows;  // rows of `rois` with label > 0, in order
  /// One kMaskSize^2 {0,1} target per positive row, aligned with positive_rows.
  std::vector<std::vector<double>> mask_targets;
  bool degenerate = false;  // no negatives were available

  std::size_t size() const { return rois.size(); }
  std::size_t num_positives() const { return positive_rows.size(); }
};

/// Positives: IoU >= 0.5 with some GT; negatives: best IoU in [0.1, 0.5).
/// Positives first, then negatives, both in a seed-determined shuffle.
RoiBatch sample_rois(const std::vector<RoI>& proposals, const SyntheticScene& scene, std::size_t rois_per_image,
                     double positive_fraction, std::uint64_t seed = 0);

/// Concatenates per-image batches, setting roi.image to the batch position.
RoiBatch concat_batches(const std::vector<RoiBatch>& batches);

/// Bilinear crop of a binary mask over `box` at size x size bin centres.
std::vector<double> crop_mask(const BinaryMask& mask, std::size_t height, std::size_t width, const RoI& box,
                              std::size_t size);
/// Thresholded version of crop_mask.
std::vector<double> mask_target(const BinaryMask& mask, std::size_t height, std::size_t width, const RoI& box,
                                std::size_t size, double threshold = 0.5);

/// Resamples a size x size probability grid back into `box` at image resolution
/// and thresholds it. Pixels outside the box are 0.
BinaryMask paste_mask(std::span<const double> probabilities, std::size_t size, const RoI& box, std::size_t height,
                      std::size_t width, double threshold = 0.5);

RoI clip_box(const RoI& box, double image_width, double image_height);

}  // namespace panet::harness
