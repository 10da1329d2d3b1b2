#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "panet/tensor.hpp"

namespace panet {

using Rng = std::mt19937_64;

/// A named model tensor. Trainable parameters get SGD updates; buffers
/// (running statistics) are only checkpointed.
struct Parameter {
  std::string name;
  Tensor value;
  bool weight_decay_enabled = true;
  bool trainable = true;
};

enum class Init { kZeros, kOnes, kHeNormal, kNormal001, kNormal0001 };

/// Owns every parameter of a model in creation order, which is also the
/// checkpoint and optimizer order.
class ParameterRegistry {
 public:
  explicit ParameterRegistry(std::uint64_t seed) : rng_(seed) {}

  Tensor create(const std::string& name, Shape shape, Init init, bool weight_decay = true);
  Tensor create_buffer(const std::string& name, Shape shape, double fill);

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const Parameter* find(const std::string& name) const;
  std::size_t trainable_count() const;
  void zero_grad();
  /// Marks every parameter whose name starts with `prefix` as frozen.
  void freeze_prefix(const std::string& prefix);

 private:
  Rng rng_;
  std::vector<Parameter> params_;
};

/// Per-forward batch-norm context: training flag plus rows per shard
/// (simulated device) along the leading axis. Empty means one shard.
struct NormContext {
  bool training = true;
  std::vector<std::size_t> shard_rows;
};

class BatchNorm;

/// 3x3 (or 1x1) convolution with optional synchronized batch norm and ReLU.
class ConvUnit {
 public:
  ConvUnit() = default;
  ConvUnit(ParameterRegistry& registry, const std::string& name, std::size_t in_channels,
           std::size_t out_channels, std::size_t kernel, std::size_t stride, bool batch_norm, bool relu);

  Tensor operator()(const Tensor& x, const NormContext& ctx) const;

  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  std::size_t out_channels() const { return weight_.dim(0); }

 private:
  Tensor weight_;
  Tensor bias_;  // undefined when followed by batch norm
  std::shared_ptr<BatchNorm> norm_;
  std::size_t stride_ = 1;
  std::size_t pad_ = 0;
  bool relu_ = true;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterRegistry& registry, const std::string& name, std::size_t in, std::size_t out,
         Init init = Init::kHeNormal);
  Tensor operator()(const Tensor& x) const;
  const Tensor& weight() const { return weight_; }

 private:
  Tensor weight_;
  Tensor bias_;
};

}  // namespace panet
