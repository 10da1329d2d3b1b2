#include "panet/harness/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>

#include "panet/ops.hpp"

namespace panet::harness {

namespace {

constexpr double kMinSide = 1.0;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Uniform in [-j, j); always consumes one draw so streams stay aligned across jitter values.
double symmetric(Rng& rng, double j) { return (2.0 * uniform(rng, 0.0, 1.0) - 1.0) * j; }

RoI from_centre(double cx, double cy, double w, double h) { return RoI{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h}; }

}  // namespace

RoI clip_box(const RoI& box, double image_width, double image_height) {
  RoI out = box;
  out.x0 = std::clamp(box.x0, 0.0, image_width - kMinSide);
  out.y0 = std::clamp(box.y0, 0.0, image_height - kMinSide);
  out.x1 = std::clamp(box.x1, out.x0 + kMinSide, image_width);
  out.y1 = std::clamp(box.y1, out.y0 + kMinSide, image_height);
  return out;
}

std::vector<RoI> jitter_box(const RoI& box, std::uint64_t seed, double jitter, std::size_t copies,
                            double image_width, double image_height) {
  Rng rng(seed);
  std::vector<RoI> out;
  out.reserve(copies);
  const double j = std::abs(jitter);
  for (std::size_t c = 0; c < copies; ++c) {
    const double cx = 0.5 * (box.x0 + box.x1) + symmetric(rng, j) * box.width();
    const double cy = 0.5 * (box.y0 + box.y1) + symmetric(rng, j) * box.height();
    const double w = box.width() * (1.0 + symmetric(rng, j));
    const double h = box.height() * (1.0 + symmetric(rng, j));
    out.push_back(clip_box(from_centre(cx, cy, w, h), image_width, image_height));
  }
  return out;
}

std::vector<RoI> make_proposals(const SyntheticScene& scene, std::uint64_t seed, double jitter,
                                std::size_t negatives_per_gt, std::size_t jittered_per_gt, bool include_gt) {
  const double W = static_cast<double>(scene.width);
  const double H = static_cast<double>(scene.height);
  Rng rng(seed);
  std::vector<RoI> out;
  for (const auto& inst : scene.instances) {
    if (include_gt) out.push_back(inst.box);
    auto copies = jitter_box(inst.box, rng(), jitter, jittered_per_gt, W, H);
    out.insert(out.end(), copies.begin(), copies.end());
  }
  for (const auto& inst : scene.instances) {
    const RoI& b = inst.box;
    for (std::size_t k = 0; k < negatives_per_gt; ++k) {
      if (k % 2 == 0) {
        // Shifted off the object along one axis: partial overlap, mostly background.
        const double sign = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
        const bool along_x = uniform(rng, 0.0, 1.0) < 0.5;
        const double major = sign * uniform(rng, 0.45, 1.0);
        const double minor = uniform(rng, -0.3, 0.3);
        const double cx = 0.5 * (b.x0 + b.x1) + (along_x ? major : minor) * b.width();
        const double cy = 0.5 * (b.y0 + b.y1) + (along_x ? minor : major) * b.height();
        const double s = uniform(rng, 0.7, 1.4);
        out.push_back(clip_box(from_centre(cx, cy, b.width() * s, b.height() * s), W, H));
      } else {
        const double w = uniform(rng, 8.0, std::min(48.0, W));
        const double h = uniform(rng, 8.0, std::min(48.0, H));
        const double x0 = uniform(rng, 0.0, W - w);
        const double y0 = uniform(rng, 0.0, H - h);
        out.push_back(clip_box(RoI{x0, y0, x0 + w, y0 + h}, W, H));
      }
    }
  }
  return out;
}

std::vector<double> crop_mask(const BinaryMask& mask, std::size_t height, std::size_t width, const RoI& box,
                              std::size_t size) {
  if (mask.size() != height * width) throw ContractError("crop_mask: mask size mismatch");
  std::vector<double> out(size * size, 0.0);
  const double bw = box.width() / static_cast<double>(size);
  const double bh = box.height() / static_cast<double>(size);
  for (std::size_t i = 0; i < size; ++i) {
    const double y = box.y0 + (static_cast<double>(i) + 0.5) * bh - 0.5;
    for (std::size_t j = 0; j < size; ++j) {
      const double x = box.x0 + (static_cast<double>(j) + 0.5) * bw - 0.5;
      const auto tap = detail::bilinear_taps(height, width, y, x);
      double v = 0.0;
      for (int q = 0; q < tap.count; ++q) v += tap.weight[q] * mask[tap.index[q]];
      out[i * size + j] = v;
    }
  }
  return out;
}

std::vector<double> mask_target(const BinaryMask& mask, std::size_t height, std::size_t width, const RoI& box,
                                std::size_t size, double threshold) {
  auto crop = crop_mask(mask, height, width, box, size);
  for (double& v : crop) v = v >= threshold ? 1.0 : 0.0;
  return crop;
}

BinaryMask paste_mask(std::span<const double> probabilities, std::size_t size, const RoI& box, std::size_t height,
                      std::size_t width, double threshold) {
  if (probabilities.size() != size * size) throw ContractError("paste_mask: grid size mismatch");
  BinaryMask out(height * width, 0);
  if (box.width() <= 0.0 || box.height() <= 0.0) return out;
  const double sx = static_cast<double>(size) / box.width();
  const double sy = static_cast<double>(size) / box.height();
  const auto last = static_cast<double>(size - 1);
  const auto lo_y = static_cast<std::size_t>(std::max(0.0, std::floor(box.y0)));
  const auto lo_x = static_cast<std::size_t>(std::max(0.0, std::floor(box.x0)));
  const auto hi_y = static_cast<std::size_t>(std::clamp(std::ceil(box.y1), 0.0, static_cast<double>(height)));
  const auto hi_x = static_cast<std::size_t>(std::clamp(std::ceil(box.x1), 0.0, static_cast<double>(width)));
  for (std::size_t py = lo_y; py < hi_y; ++py) {
    const double cy = static_cast<double>(py) + 0.5;
    if (cy < box.y0 || cy > box.y1) continue;
    // Grid coordinate of the pixel centre; clamp to the edge cells.
    const double v = std::clamp((cy - box.y0) * sy - 0.5, 0.0, last);
    const auto v0 = static_cast<std::size_t>(std::floor(v));
    const std::size_t v1 = std::min(v0 + 1, size - 1);
    const double fv = v - static_cast<double>(v0);
    for (std::size_t px = lo_x; px < hi_x; ++px) {
      const double cx = static_cast<double>(px) + 0.5;
      if (cx < box.x0 || cx > box.x1) continue;
      const double u = std::clamp((cx - box.x0) * sx - 0.5, 0.0, last);
      const auto u0 = static_cast<std::size_t>(std::floor(u));
      const std::size_t u1 = std::min(u0 + 1, size - 1);
      const double fu = u - static_cast<double>(u0);
      const double p = (1 - fv) * ((1 - fu) * probabilities[v0 * size + u0] + fu * probabilities[v0 * size + u1]) +
                       fv * ((1 - fu) * probabilities[v1 * size + u0] + fu * probabilities[v1 * size + u1]);
      if (p >= threshold) out[py * width + px] = 1;
    }
  }
  return out;
}

RoiBatch sample_rois(const std::vector<RoI>& proposals, const SyntheticScene& scene, std::size_t rois_per_image,
                     double positive_fraction, std::uint64_t seed) {
  if (rois_per_image < 4) throw ContractError("sample_rois: rois_per_image must be >= 4");
  if (!(positive_fraction > 0.0 && positive_fraction <= 1.0)) {
    throw ContractError("sample_rois: positive_fraction must be in (0, 1]");
  }
  std::vector<std::size_t> positives, negatives;
  std::vector<std::size_t> match(proposals.size(), 0);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    double best = 0.0;
    for (std::size_t g = 0; g < scene.instances.size(); ++g) {
      const double iou = box_iou(proposals[i], scene.instances[g].box);
      if (iou > best) {
        best = iou;
        match[i] = g;
      }
    }
    if (best >= 0.5) {
      positives.push_back(i);
    } else if (best >= 0.1) {
      negatives.push_back(i);
    }
  }

  Rng rng(seed);
  std::shuffle(positives.begin(), positives.end(), rng);
  std::shuffle(negatives.begin(), negatives.end(), rng);
  const auto max_pos = static_cast<std::size_t>(std::floor(positive_fraction * static_cast<double>(rois_per_image)));
  const std::size_t n_pos = std::min(positives.size(), max_pos);
  const std::size_t n_neg = std::min(negatives.size(), rois_per_image - n_pos);

  RoiBatch batch;
  batch.degenerate = negatives.empty();
  if (batch.degenerate) {
    std::clog << "warning: sample_rois: no negative candidates, batch has positives only\n";
  }
  auto push = [&](std::size_t idx, bool positive) {
    RoI roi = proposals[idx];
    roi.image = 0;
    batch.rois.push_back(roi);
    if (positive) {
      const Instance& gt = scene.instances[match[idx]];
      batch.labels.push_back(gt.class_id);
      batch.box_targets.push_back(encode_box_deltas(gt.box, roi));
      batch.positive_rows.push_back(batch.rois.size() - 1);
      batch.mask_targets.push_back(mask_target(gt.mask, scene.height, scene.width, roi, kMaskSize));
    } else {
      batch.labels.push_back(0);
      batch.box_targets.push_back(BoxDeltas{});
    }
  };
  for (std::size_t k = 0; k < n_pos; ++k) push(positives[k], true);
  for (std::size_t k = 0; k < n_neg; ++k) push(negatives[k], false);
  return batch;
}

RoiBatch concat_batches(const std::vector<RoiBatch>& batches) {
  RoiBatch out;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const RoiBatch& in = batches[b];
    const std::size_t offset = out.rois.size();
    for (RoI roi : in.rois) {
      roi.image = b;
      out.rois.push_back(roi);
    }
    out.labels.insert(out.labels.end(), in.labels.begin(), in.labels.end());
    out.box_targets.insert(out.box_targets.end(), in.box_targets.begin(), in.box_targets.end());
    for (std::size_t r : in.positive_rows) out.positive_rows.push_back(offset + r);
    out.mask_targets.insert(out.mask_targets.end(), in.mask_targets.begin(), in.mask_targets.end());
    out.degenerate = out.degenerate || in.degenerate;
  }
  return out;
}

}  // namespace panet::harness
