#include "panet/harness/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "panet/harness/checkpoint.hpp"
#include "panet/harness/proposals.hpp"

namespace panet::harness {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string format_metrics_row(const MetricsRow& row) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.6g,%.9g,%.9g,%.9g,%.9g", row.step, row.lr, row.cls, row.box, row.mask,
                row.total);
  return buf;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << kMetricsHeader << '\n';
  for (const auto& r : rows) os << format_metrics_row(r) << '\n';
}

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  model_ = std::make_unique<PANetModel>(cfg_);
  sgd_ = std::make_unique<SGD>(model_->registry(), cfg_.momentum, cfg_.weight_decay);
  scenes_ = generate_scenes(mix_seed(cfg_.seed, 1), cfg_.train_scenes, cfg_.image_size, cfg_.max_instances);
  order_.resize(scenes_.size());
  std::iota(order_.begin(), order_.end(), 0);
  cursor_ = order_.size();
}

std::vector<const SyntheticScene*> Trainer::next_scenes() {
  std::vector<const SyntheticScene*> out;
  while (out.size() < cfg_.images_per_step) {
    if (cursor_ == order_.size()) {
      Rng rng(mix_seed(cfg_.seed, 1000 + epoch_++));
      std::shuffle(order_.begin(), order_.end(), rng);
      cursor_ = 0;
    }
    out.push_back(&scenes_[order_[cursor_++]]);
  }
  return out;
}

LossTerms Trainer::losses_for(const std::vector<const SyntheticScene*>& scenes, std::uint64_t seed) {
  std::vector<RoiBatch> parts;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const std::uint64_t s = mix_seed(seed, i);
    const auto proposals =
        make_proposals(*scenes[i], s, cfg_.proposal_jitter, cfg_.proposal_negatives, cfg_.proposal_copies);
    parts.push_back(sample_rois(proposals, *scenes[i], cfg_.rois_per_image, cfg_.positive_fraction, mix_seed(s, 7)));
  }
  const RoiBatch batch = concat_batches(parts);

  const Tensor images = PANetModel::image_batch(scenes);
  const auto levels = model_->features(images, model_->image_context(scenes.size(), true));
  const BoxPrediction box =
      model_->box_forward(levels, batch.rois, model_->roi_context(batch.rois, scenes.size(), true));

  MaskPrediction mask;
  if (batch.num_positives() > 0) {
    std::vector<RoI> positives;
    for (std::size_t r : batch.positive_rows) positives.push_back(batch.rois[r]);
    mask = model_->mask_forward(levels, positives, model_->roi_context(positives, scenes.size(), true));
  }
  return compute_losses(box, &mask, batch);
}

MetricsRow Trainer::step() {
  ++step_;
  const auto scenes = next_scenes();
  model_->registry().zero_grad();
  LossTerms terms = losses_for(scenes, mix_seed(cfg_.seed, 1u << 20 | step_));

  MetricsRow row;
  row.step = step_;
  row.lr = learning_rate_at(cfg_, step_);
  row.cls = terms.cls.item();
  row.box = terms.box.item();
  row.mask = terms.mask.item();
  row.total = terms.total.item();
  if (!std::isfinite(row.total)) {
    throw DivergenceError("training diverged at step " + std::to_string(step_) + ": " + format_metrics_row(row) +
                          " (try a lower learning_rate)");
  }
  terms.total.backward();
  sgd_->step(row.lr);
  return row;
}

TrainResult train(const TrainConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const auto start = std::chrono::steady_clock::now();

  TrainResult result;
  Trainer trainer(cfg);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    result.rows.push_back(trainer.step());
    if (cfg.log_every > 0 && (s + 1) % cfg.log_every == 0) {
      std::clog << "step " << format_metrics_row(result.rows.back()) << '\n';
    }
  }

  result.metrics_path = (fs::path(out_dir) / "metrics.csv").string();
  result.checkpoint_path = (fs::path(out_dir) / "model.ckpt").string();
  {
    std::ofstream out(result.metrics_path);
    if (!out) throw ConfigError("train: cannot write " + result.metrics_path);
    write_metrics_csv(out, result.rows);
  }
  save_checkpoint(result.checkpoint_path, to_text(cfg), trainer.model().registry());
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

double median_total(const std::vector<MetricsRow>& rows, std::size_t first, std::size_t last) {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (r.step >= first && r.step <= last) v.push_back(r.total);
  }
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace panet::harness
