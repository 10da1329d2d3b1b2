#include "panet/sync_bn.hpp"

#include <cmath>
#include <numeric>

#include "panet/ops.hpp"

namespace panet {

namespace {

struct Layout {
  std::size_t channels;
  std::size_t plane;  // product of trailing spatial dims
};

Layout layout_of(const Tensor& t) {
  if (t.rank() < 2) throw ContractError("sync_bn: expects [N,C,...] tensors");
  return {t.dim(1), t.size() / (t.dim(0) * t.dim(1))};
}

}  // namespace

ShardedBatch ShardedBatch::split(const Tensor& batch, std::span<const std::size_t> rows) {
  if (batch.rank() < 2) throw ContractError("sync_bn: expects [N,C,...] batch");
  const std::size_t total = std::accumulate(rows.begin(), rows.end(), std::size_t{0});
  if (total != batch.dim(0)) throw ContractError("sync_bn: shard rows do not cover the batch");
  const std::size_t row_size = batch.size() / batch.dim(0);
  ShardedBatch out;
  std::size_t offset = 0;
  for (std::size_t r : rows) {
    if (r == 0) throw ContractError("sync_bn: empty shard");
    Shape shape = batch.shape();
    shape[0] = r;
    std::vector<double> values(batch.data().begin() + offset * row_size,
                               batch.data().begin() + (offset + r) * row_size);
    out.shards.push_back(Tensor::from(std::move(shape), std::move(values)));
    offset += r;
  }
  return out;
}

ShardedBatch ShardedBatch::split_even(const Tensor& batch, std::size_t n) {
  if (n == 0 || n > batch.dim(0)) throw ContractError("sync_bn: shard count must be in [1, batch]");
  std::vector<std::size_t> rows(n, batch.dim(0) / n);
  for (std::size_t i = 0; i < batch.dim(0) % n; ++i) ++rows[i];
  return split(batch, rows);
}

std::size_t ShardedBatch::channels() const {
  if (shards.empty()) throw ContractError("sync_bn: no shards");
  return shards.front().dim(1);
}

std::size_t ShardedBatch::total_rows() const {
  std::size_t rows = 0;
  for (const auto& s : shards) rows += s.dim(0);
  return rows;
}

GlobalMoments allreduce_moments(const ShardedBatch& batch) {
  if (batch.shards.empty()) throw ContractError("allreduce_moments: no shards");
  const std::size_t channels = batch.channels();
  for (const auto& s : batch.shards) {
    if (s.rank() < 2 || s.dim(0) == 0) throw ContractError("allreduce_moments: empty shard");
    if (s.dim(1) != channels) throw ContractError("allreduce_moments: channel mismatch between shards");
  }

  GlobalMoments m;
  m.mean.assign(channels, 0.0);
  m.variance.assign(channels, 0.0);

  // Phase 1: each shard computes mu_i locally; AllReduce as a count-weighted sum.
  std::vector<long double> weighted(channels, 0.0L);
  for (const auto& s : batch.shards) {
    const Layout l = layout_of(s);
    const std::size_t per_channel = s.dim(0) * l.plane;
    const auto v = s.data();
    for (std::size_t c = 0; c < channels; ++c) {
      long double acc = 0.0L;
      for (std::size_t n = 0; n < s.dim(0); ++n) {
        const double* p = v.data() + (n * channels + c) * l.plane;
        for (std::size_t k = 0; k < l.plane; ++k) acc += p[k];
      }
      const long double mu_i = acc / static_cast<long double>(per_channel);
      weighted[c] += mu_i * static_cast<long double>(per_channel);
    }
    m.count += per_channel;
  }
  for (std::size_t c = 0; c < channels; ++c) {
    m.mean[c] = static_cast<double>(weighted[c] / static_cast<long double>(m.count));
  }

  // Phase 2: shards reduce squared deviations from the broadcast mu_B.
  std::vector<long double> squares(channels, 0.0L);
  for (const auto& s : batch.shards) {
    const Layout l = layout_of(s);
    const auto v = s.data();
    for (std::size_t c = 0; c < channels; ++c) {
      long double acc = 0.0L;
      for (std::size_t n = 0; n < s.dim(0); ++n) {
        const double* p = v.data() + (n * channels + c) * l.plane;
        for (std::size_t k = 0; k < l.plane; ++k) {
          const long double d = p[k] - m.mean[c];
          acc += d * d;
        }
      }
      squares[c] += acc;
    }
  }
  for (std::size_t c = 0; c < channels; ++c) {
    m.variance[c] = static_cast<double>(squares[c] / static_cast<long double>(m.count));
  }
  return m;
}

SyncBNForward syncbn_forward(const ShardedBatch& batch, BNLayer& layer, BNMode mode) {
  if (batch.shards.empty()) throw ContractError("syncbn_forward: no shards");
  const std::size_t channels = batch.channels();
  if (channels != layer.channels()) {
    throw ContractError("syncbn_forward: batch has " + std::to_string(channels) + " channels, layer " +
                        std::to_string(layer.channels()));
  }

  std::vector<double> mean(channels), var(channels);
  if (mode == BNMode::kTrain) {
    const GlobalMoments m = allreduce_moments(batch);
    mean = m.mean;
    var = m.variance;
    auto rm = layer.running_mean.mutable_data();
    auto rv = layer.running_var.mutable_data();
    for (std::size_t c = 0; c < channels; ++c) {
      rm[c] = (1.0 - layer.momentum) * rm[c] + layer.momentum * mean[c];
      rv[c] = (1.0 - layer.momentum) * rv[c] + layer.momentum * var[c];
    }
  } else {
    std::copy(layer.running_mean.data().begin(), layer.running_mean.data().end(), mean.begin());
    std::copy(layer.running_var.data().begin(), layer.running_var.data().end(), var.begin());
  }

  SyncBNForward out;
  out.cache.mode = mode;
  out.cache.shape = batch.shards.front().shape();
  out.cache.shape[0] = batch.total_rows();
  out.cache.inv_std.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) out.cache.inv_std[c] = 1.0 / std::sqrt(var[c] + layer.eps);

  const auto gamma = layer.gamma.data();
  const auto beta = layer.beta.data();
  for (const auto& s : batch.shards) {
    out.cache.shard_rows.push_back(s.dim(0));
    const Layout l = layout_of(s);
    const auto v = s.data();
    for (std::size_t n = 0; n < s.dim(0); ++n) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double* p = v.data() + (n * channels + c) * l.plane;
        for (std::size_t k = 0; k < l.plane; ++k) {
          const double xhat = (p[k] - mean[c]) * out.cache.inv_std[c];
          out.cache.normalized.push_back(xhat);
          out.output.push_back(gamma[c] * xhat + beta[c]);
        }
      }
    }
  }
  out.cache.valid = true;
  return out;
}

SyncBNGradients syncbn_backward(std::span<const double> upstream, const SyncBNCache& cache,
                                const BNLayer& layer) {
  if (!cache.valid) throw ContractError("syncbn_backward: no cached forward state");
  if (upstream.size() != cache.normalized.size()) throw ContractError("syncbn_backward: upstream size mismatch");
  const std::size_t channels = cache.inv_std.size();
  const std::size_t rows = cache.shape[0];
  const std::size_t plane = cache.normalized.size() / (rows * channels);
  const auto gamma = layer.gamma.data();

  SyncBNGradients g;
  g.gamma.assign(channels, 0.0);
  g.beta.assign(channels, 0.0);
  g.input.assign(upstream.size(), 0.0);

  // Per-shard partial sums, then AllReduce in shard order.
  std::vector<long double> sum_dy(channels, 0.0L), sum_dy_xhat(channels, 0.0L);
  std::size_t offset = 0;
  for (std::size_t rows_i : cache.shard_rows) {
    for (std::size_t c = 0; c < channels; ++c) {
      long double a = 0.0L, b = 0.0L;
      for (std::size_t n = offset; n < offset + rows_i; ++n) {
        const std::size_t base = (n * channels + c) * plane;
        for (std::size_t k = 0; k < plane; ++k) {
          a += upstream[base + k];
          b += static_cast<long double>(upstream[base + k]) * cache.normalized[base + k];
        }
      }
      sum_dy[c] += a;
      sum_dy_xhat[c] += b;
    }
    offset += rows_i;
  }
  for (std::size_t c = 0; c < channels; ++c) {
    g.beta[c] = static_cast<double>(sum_dy[c]);
    g.gamma[c] = static_cast<double>(sum_dy_xhat[c]);
  }

  const double m = static_cast<double>(rows * plane);
  for (std::size_t n = 0; n < rows; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (n * channels + c) * plane;
      const double scale = gamma[c] * cache.inv_std[c];
      for (std::size_t k = 0; k < plane; ++k) {
        if (cache.mode == BNMode::kEval) {
          g.input[base + k] = scale * upstream[base + k];
        } else {
          g.input[base + k] = scale * (upstream[base + k] - g.beta[c] / m - cache.normalized[base + k] * g.gamma[c] / m);
        }
      }
    }
  }
  return g;
}

Tensor sync_batch_norm(const Tensor& x, BNLayer& layer, std::span<const std::size_t> shard_rows,
                       BNMode mode) {
  std::vector<std::size_t> rows(shard_rows.begin(), shard_rows.end());
  if (rows.empty()) rows.push_back(x.dim(0));
  SyncBNForward fwd = syncbn_forward(ShardedBatch::split(x, rows), layer, mode);
  // The layer is captured by pointer: its gamma/beta tensors outlive the graph.
  auto cache = std::make_shared<SyncBNCache>(std::move(fwd.cache));
  const BNLayer* lp = &layer;
  Tensor gamma = layer.gamma, beta = layer.beta;
  return detail::make_result(x.shape(), std::move(fwd.output), {x, gamma, beta},
                             [x, gamma, beta, cache, lp](detail::TensorImpl& self) {
    SyncBNGradients g = syncbn_backward(self.grad, *cache, *lp);
    if (x.requires_grad()) {
      auto gx = x.impl()->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g.input[i];
    }
    if (gamma.requires_grad()) {
      auto gg = gamma.impl()->grad_buffer();
      for (std::size_t c = 0; c < gg.size(); ++c) gg[c] += g.gamma[c];
    }
    if (beta.requires_grad()) {
      auto gb = beta.impl()->grad_buffer();
      for (std::size_t c = 0; c < gb.size(); ++c) gb[c] += g.beta[c];
    }
  });
}

BatchNorm::BatchNorm(ParameterRegistry& registry, const std::string& name, std::size_t channels) {
  layer_.gamma = registry.create(name + ".gamma", {channels}, Init::kOnes, false);
  layer_.beta = registry.create(name + ".beta", {channels}, Init::kZeros, false);
  layer_.running_mean = registry.create_buffer(name + ".running_mean", {channels}, 0.0);
  layer_.running_var = registry.create_buffer(name + ".running_var", {channels}, 1.0);
}

Tensor BatchNorm::operator()(const Tensor& x, const NormContext& ctx) const {
  return sync_batch_norm(x, layer_, ctx.shard_rows, ctx.training ? BNMode::kTrain : BNMode::kEval);
}

}  // namespace panet
