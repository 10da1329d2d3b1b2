#include "panet/harness/losses.hpp"

#include <algorithm>
#include <cmath>

#include "panet/ops.hpp"

namespace panet::harness {

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ContractError("softmax_cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                        std::to_string(labels.size()) + " labels");
  }
  const std::size_t r = logits.dim(0), c = logits.dim(1);
  if (r == 0) return Tensor::zeros({1});
  std::vector<double> probs(r * c);
  double loss = 0.0;
  const auto x = logits.data();
  for (std::size_t i = 0; i < r; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw ContractError("softmax_cross_entropy: label out of range");
    }
    const double* row = x.data() + i * c;
    const double m = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
    const double log_z = m + std::log(z);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - log_z);
    loss += log_z - row[labels[i]];
  }
  const double inv_r = 1.0 / static_cast<double>(r);
  std::vector<int> lab(labels.begin(), labels.end());
  return detail::make_result({1}, {loss * inv_r}, {logits},
                             [logits, probs = std::move(probs), lab = std::move(lab), r, c, inv_r](detail::TensorImpl& self) {
                               auto g = logits.impl()->grad_buffer();
                               const double up = self.grad[0] * inv_r;
                               for (std::size_t i = 0; i < r; ++i) {
                                 for (std::size_t j = 0; j < c; ++j) {
                                   const double onehot = static_cast<int>(j) == lab[i] ? 1.0 : 0.0;
                                   g[i * c + j] += up * (probs[i * c + j] - onehot);
                                 }
                               }
                             });
}

Tensor smooth_l1_box_loss(const Tensor& deltas, std::span<const int> labels, std::span<const BoxDeltas> targets,
                          double beta) {
  if (deltas.rank() != 2 || deltas.dim(0) != labels.size() || targets.size() != labels.size() ||
      deltas.dim(1) % 4 != 0) {
    throw ContractError("smooth_l1_box_loss: inconsistent shapes");
  }
  const std::size_t r = deltas.dim(0), cols = deltas.dim(1);
  if (r == 0) return Tensor::zeros({1});
  const double inv_r = 1.0 / static_cast<double>(r);
  std::vector<double> dloss(r * cols, 0.0);
  double loss = 0.0;
  const auto x = deltas.data();
  for (std::size_t i = 0; i < r; ++i) {
    if (labels[i] <= 0) continue;
    const std::size_t base = i * cols + 4 * static_cast<std::size_t>(labels[i] - 1);
    if (base + 4 > (i + 1) * cols) throw ContractError("smooth_l1_box_loss: label out of range");
    for (std::size_t k = 0; k < 4; ++k) {
      const double d = x[base + k] - targets[i][k];
      const double a = std::abs(d);
      if (a < beta) {
        loss += 0.5 * d * d / beta;
        dloss[base + k] = d / beta;
      } else {
        loss += a - 0.5 * beta;
        dloss[base + k] = d > 0 ? 1.0 : -1.0;
      }
    }
  }
  return detail::make_result({1}, {loss * inv_r}, {deltas},
                             [deltas, dloss = std::move(dloss), inv_r](detail::TensorImpl& self) {
                               auto g = deltas.impl()->grad_buffer();
                               const double up = self.grad[0] * inv_r;
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * dloss[i];
                             });
}

Tensor mask_bce_loss(const Tensor& logits, std::span<const int> classes, const std::vector<std::vector<double>>& targets) {
  if (logits.rank() != 4 || logits.dim(0) != classes.size() || targets.size() != classes.size()) {
    throw ContractError("mask_bce_loss: inconsistent shapes");
  }
  const std::size_t p = logits.dim(0), k = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
  if (p == 0) return Tensor::zeros({1});
  const double inv_n = 1.0 / static_cast<double>(p * plane);
  std::vector<double> dloss(logits.size(), 0.0);
  double loss = 0.0;
  const auto x = logits.data();
  for (std::size_t i = 0; i < p; ++i) {
    if (classes[i] < 1 || static_cast<std::size_t>(classes[i]) > k) throw ContractError("mask_bce_loss: bad class");
    if (targets[i].size() != plane) throw ContractError("mask_bce_loss: target size mismatch");
    const std::size_t base = (i * k + static_cast<std::size_t>(classes[i] - 1)) * plane;
    for (std::size_t q = 0; q < plane; ++q) {
      const double z = x[base + q];
      const double t = targets[i][q];
      // log(1 + exp(-|z|)) form keeps large logits finite.
      loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
      dloss[base + q] = 1.0 / (1.0 + std::exp(-z)) - t;
    }
  }
  return detail::make_result({1}, {loss * inv_n}, {logits},
                             [logits, dloss = std::move(dloss), inv_n](detail::TensorImpl& self) {
                               auto g = logits.impl()->grad_buffer();
                               const double up = self.grad[0] * inv_n;
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * dloss[i];
                             });
}

LossTerms compute_losses(const BoxPrediction& box, const MaskPrediction* mask, const RoiBatch& batch) {
  LossTerms terms;
  terms.cls = softmax_cross_entropy(box.class_logits, batch.labels);
  terms.box = smooth_l1_box_loss(box.box_deltas, batch.labels, batch.box_targets);
  if (batch.num_positives() == 0 || mask == nullptr || !mask->fused_logits.defined()) {
    terms.mask = Tensor::zeros({1});
  } else {
    std::vector<int> classes;
    classes.reserve(batch.num_positives());
    for (std::size_t r : batch.positive_rows) classes.push_back(batch.labels[r]);
    terms.mask = mask_bce_loss(mask->fused_logits, classes, batch.mask_targets);
  }
  terms.total = add(add(terms.cls, terms.box), terms.mask);
  return terms;
}

}  // namespace panet::harness
