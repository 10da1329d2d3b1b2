#pragma once

#include <span>
#include <string>
#include <vector>

#include "panet/nn.hpp"
#include "panet/tensor.hpp"

namespace panet {

/// A batch split along its leading axis into per-device sub-batches.
struct ShardedBatch {
  std::vector<Tensor> shards;  // each [b_i, C, ...]

  /// Splits `batch` into consecutive shards of the given row counts.
  static ShardedBatch split(const Tensor& batch, std::span<const std::size_t> rows);
  /// Splits into `n` shards as evenly as possible (earlier shards get the remainder).
  static ShardedBatch split_even(const Tensor& batch, std::size_t n);

  std::size_t channels() const;
  std::size_t total_rows() const;
};

/// Whole-batch moments after the two-phase AllReduce.
struct GlobalMoments {
  std::vector<double> mean;      // mu_B per channel
  std::vector<double> variance;  // biased sigma^2_B per channel
  std::size_t count = 0;         // elements per channel across all shards
};

/// Phase 1 reduces count-weighted shard means into mu_B; phase 2 reduces shard
/// sums of squared deviations from mu_B into sigma^2_B. Both reductions run in
/// shard order, and the result is what every shard would receive on broadcast.
GlobalMoments allreduce_moments(const ShardedBatch& batch);

enum class BNMode { kTrain, kEval };

struct BNLayer {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  std::size_t channels() const { return gamma.size(); }
};

/// Everything backward needs from a forward pass.
struct SyncBNCache {
  Shape shape;                      // reassembled batch shape
  std::vector<std::size_t> shard_rows;
  std::vector<double> normalized;   // x_hat, batch order
  std::vector<double> inv_std;      // per channel
  BNMode mode = BNMode::kTrain;
  bool valid = false;
};

struct SyncBNForward {
  std::vector<double> output;  // batch order
  SyncBNCache cache;
};

struct SyncBNGradients {
  std::vector<double> input;
  std::vector<double> gamma;
  std::vector<double> beta;
};

/// y = gamma * (x - mu_B) / sqrt(sigma^2_B + eps) + beta. Train mode uses the
/// AllReduced moments and updates the running statistics; eval uses them.
SyncBNForward syncbn_forward(const ShardedBatch& batch, BNLayer& layer, BNMode mode);

/// Exact batch-norm gradients. The two cross-shard sums (of dy and dy*x_hat)
/// are reduced in shard order, matching the forward protocol.
SyncBNGradients syncbn_backward(std::span<const double> upstream, const SyncBNCache& cache,
                                const BNLayer& layer);

/// Autodiff wrapper: splits `x` by `shard_rows`, normalizes, and records a node
/// whose backward calls syncbn_backward.
Tensor sync_batch_norm(const Tensor& x, BNLayer& layer, std::span<const std::size_t> shard_rows,
                       BNMode mode);

/// BNLayer owned by a ParameterRegistry. gamma/beta are exempt from weight decay.
class BatchNorm {
 public:
  BatchNorm(ParameterRegistry& registry, const std::string& name, std::size_t channels);
  Tensor operator()(const Tensor& x, const NormContext& ctx) const;
  BNLayer& layer() const { return layer_; }

 private:
  mutable BNLayer layer_;
};

}  // namespace panet
