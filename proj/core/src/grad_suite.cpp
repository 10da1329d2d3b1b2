#include "panet/grad_suite.hpp"

#include <chrono>
#include <functional>
#include <random>

#include "panet/feature_pyramid.hpp"
#include "panet/heads.hpp"
#include "panet/ops.hpp"
#include "panet/roi_pooling.hpp"
#include "panet/sync_bn.hpp"

namespace panet {

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Values bounded away from zero so ReLU and max kinks are not straddled by eps.
Tensor away_from_zero(Rng& rng, Shape shape) {
  Tensor t = random_tensor(rng, std::move(shape), 0.1, 1.0);
  std::bernoulli_distribution flip(0.5);
  for (double& x : t.mutable_data()) x = flip(rng) ? -x : x;
  return t;
}

class Suite {
 public:
  void run(const std::string& name, const GradCheckedOp& op, std::vector<Tensor> inputs,
           GradCheckOptions options = {}) {
    const auto start = std::chrono::steady_clock::now();
    GradSuiteEntry e;
    e.name = name;
    e.report = grad_check(op, std::move(inputs), options);
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    entries.push_back(std::move(e));
  }
  std::vector<GradSuiteEntry> entries;
};

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed) {
  Rng rng(seed);
  Suite suite;

  suite.run("conv2d_3x3_s1",
            [](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], 1, 1); },
            {random_tensor(rng, {2, 3, 6, 5}), random_tensor(rng, {4, 3, 3, 3}), random_tensor(rng, {4})});
  suite.run("conv2d_3x3_s2",
            [](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], 2, 1); },
            {random_tensor(rng, {2, 2, 8, 8}), random_tensor(rng, {3, 2, 3, 3}), random_tensor(rng, {3})});
  suite.run("conv2d_1x1",
            [](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], 1, 0); },
            {random_tensor(rng, {2, 3, 4, 4}), random_tensor(rng, {2, 3, 1, 1}), random_tensor(rng, {2})});
  suite.run("conv_transpose2d_k2",
            [](const std::vector<Tensor>& in) { return conv_transpose2d(in[0], in[1], in[2], 2, 0); },
            {random_tensor(rng, {2, 3, 4, 3}), random_tensor(rng, {3, 2, 2, 2}), random_tensor(rng, {2})});
  suite.run("conv_transpose2d_k4",
            [](const std::vector<Tensor>& in) { return conv_transpose2d(in[0], in[1], in[2], 2, 1); },
            {random_tensor(rng, {1, 2, 3, 4}), random_tensor(rng, {2, 3, 4, 4}), random_tensor(rng, {3})});
  suite.run("linear", [](const std::vector<Tensor>& in) { return linear(in[0], in[1], in[2]); },
            {random_tensor(rng, {3, 7}), random_tensor(rng, {5, 7}), random_tensor(rng, {5})});
  suite.run("relu", [](const std::vector<Tensor>& in) { return relu(in[0]); }, {away_from_zero(rng, {4, 9})});

  for (FuseMode mode : {FuseMode::kMax, FuseMode::kSum, FuseMode::kProduct}) {
    suite.run("elementwise_fuse_" + std::string(to_string(mode)),
              [mode](const std::vector<Tensor>& in) { return elementwise_fuse(in, mode); },
              {random_tensor(rng, {2, 3, 4}), random_tensor(rng, {2, 3, 4}), random_tensor(rng, {2, 3, 4}),
               random_tensor(rng, {2, 3, 4})});
    suite.run("broadcast_channel_fuse_" + std::string(to_string(mode)),
              [mode](const std::vector<Tensor>& in) { return broadcast_channel_fuse(in[0], in[1], mode); },
              {random_tensor(rng, {2, 3, 4, 4}), random_tensor(rng, {2, 1, 4, 4})});
  }

  {
    std::uniform_real_distribution<double> pos(0.0, 40.0), size(4.0, 30.0);
    std::vector<RoI> rois;
    for (std::size_t i = 0; i < 4; ++i) {
      RoI r;
      r.x0 = pos(rng);
      r.y0 = pos(rng);
      r.x1 = r.x0 + size(rng);
      r.y1 = r.y0 + size(rng);
      r.image = i % 2;
      rois.push_back(r);
    }
    suite.run("roi_align",
              [rois](const std::vector<Tensor>& in) { return roi_align_batch(in[0], rois, {5, 2}, 4); },
              {random_tensor(rng, {2, 3, 12, 12})});
  }

  {
    ParameterRegistry reg(seed + 11);
    BottomUpBlock block(reg, 3, false, "bu");
    const NormContext ctx;
    suite.run("bottom_up_block",
              [&block, &ctx](const std::vector<Tensor>& in) { return block.forward(in[0], in[1], ctx); },
              {random_tensor(rng, {2, 3, 8, 8}), random_tensor(rng, {2, 3, 4, 4}), block.downsample().weight(),
               block.fuse().weight()},
              {.eps = 1e-6});
  }

  GradCheckOptions head_options;
  head_options.eps = 1e-6;
  head_options.max_probes_per_input = 60;

  for (BoxVariant variant : {BoxVariant::kTwoFc, BoxVariant::kHeavier}) {
    ParameterRegistry reg(seed + 21);
    BoxHeadConfig cfg;
    cfg.variant = variant;
    cfg.in_channels = 3;
    cfg.hidden_dim = 8;
    auto head = std::make_shared<BoxHead>(reg, cfg);
    std::vector<Tensor> inputs;
    for (int l = 0; l < 4; ++l) inputs.push_back(random_tensor(rng, {3, 3, 7, 7}));
    inputs.push_back(head->first_layer_weight(0));
    for (const auto& p : reg.parameters()) {
      if (p.name.find(".cls.") != std::string::npos || p.name.find(".bbox.weight") != std::string::npos) {
        inputs.push_back(p.value);
      }
    }
    const NormContext ctx;
    suite.run("box_head_" + std::string(to_string(variant)),
              [head, ctx](const std::vector<Tensor>& in) {
                const std::vector<Tensor> grids(in.begin(), in.begin() + 4);
                BoxPrediction p = head->forward(grids, ctx);
                return concat0({reshape(p.class_logits, {p.class_logits.size()}), reshape(p.box_deltas, {p.box_deltas.size()})});
              },
              inputs, head_options);
  }

  {
    ParameterRegistry reg(seed + 31);
    MaskHeadConfig cfg;
    cfg.in_channels = 3;
    cfg.conv_channels = 4;
    auto head = std::make_shared<MaskHead>(reg, cfg);
    std::vector<Tensor> inputs;
    for (int l = 0; l < 4; ++l) inputs.push_back(random_tensor(rng, {2, 3, 14, 14}));
    inputs.push_back(head->first_layer_weight(0));
    for (const auto& t : head->fc_branch_parameters()) inputs.push_back(t);
    const NormContext ctx;
    suite.run("mask_head",
              [head, ctx](const std::vector<Tensor>& in) {
                const std::vector<Tensor> grids(in.begin(), in.begin() + 4);
                return head->forward(grids, ctx).fused_logits;
              },
              inputs, head_options);
  }

  {
    auto layer = std::make_shared<BNLayer>();
    layer->gamma = random_tensor(rng, {3}, 0.5, 1.5);
    layer->beta = random_tensor(rng, {3});
    layer->running_mean = Tensor::zeros({3});
    layer->running_var = Tensor::full({3}, 1.0);
    const std::vector<std::size_t> shards = {2, 2};
    suite.run("sync_batch_norm_2_shards",
              [layer, shards](const std::vector<Tensor>& in) {
                return sync_batch_norm(in[0], *layer, shards, BNMode::kTrain);
              },
              {random_tensor(rng, {4, 3, 5, 5}), layer->gamma, layer->beta});
    suite.run("sync_batch_norm_eval",
              [layer, shards](const std::vector<Tensor>& in) {
                return sync_batch_norm(in[0], *layer, shards, BNMode::kEval);
              },
              {random_tensor(rng, {4, 3, 3, 3}), layer->gamma, layer->beta});
  }

  return suite.entries;
}

}  // namespace panet
