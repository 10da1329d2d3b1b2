#pragma once

#include <span>
#include <vector>

#include "panet/harness/proposals.hpp"
#include "panet/heads.hpp"
#include "panet/tensor.hpp"

namespace panet::harness {

/// Transition point of the smooth-L1 box loss.
inline constexpr double kSmoothL1Beta = 1.0 / 9.0;

/// Mean softmax cross-entropy of logits [R, C] against integer labels. Returns [1].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Smooth-L1 on the 4 deltas of each positive's own class, summed and divided by
/// the total number of rows R. deltas is [R, 4K]; labels 0 are skipped.
Tensor smooth_l1_box_loss(const Tensor& deltas, std::span<const int> labels, std::span<const BoxDeltas> targets,
                          double beta = kSmoothL1Beta);

/// Mean per-pixel binary cross-entropy on channel (classes[i] - 1) of logits
/// [P, K, M, M] against {0,1} targets of M*M each.
Tensor mask_bce_loss(const Tensor& logits, std::span<const int> classes, const std::vector<std::vector<double>>& targets);

struct LossTerms {
  Tensor cls;
  Tensor box;
  Tensor mask;
  Tensor total;
};

/// `mask` may be null or hold undefined logits when the batch has no positives.
LossTerms compute_losses(const BoxPrediction& box, const MaskPrediction* mask, const RoiBatch& batch);

}  // namespace panet::harness
