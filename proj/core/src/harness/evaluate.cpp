#include "panet/harness/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "panet/harness/checkpoint.hpp"
#include "panet/harness/proposals.hpp"
#include "panet/harness/train.hpp"

namespace panet::harness {

std::vector<InstanceScore> score_scene(const SyntheticScene& scene, const std::vector<Prediction>& predictions) {
  std::vector<InstanceScore> scores;
  for (const Instance& gt : scene.instances) {
    InstanceScore s;
    const Prediction* best = nullptr;
    for (const Prediction& p : predictions) {
      const double iou = box_iou(p.box, gt.box);
      if (best == nullptr || iou > s.box_iou) {
        best = &p;
        s.box_iou = iou;
      }
    }
    if (best != nullptr) {
      const BinaryMask pasted = paste_mask(best->mask, kMaskSize, best->box, scene.height, scene.width);
      s.mask_iou = mask_iou(pasted, gt.mask);
      s.correct = best->label == gt.class_id;
    }
    scores.push_back(s);
  }
  return scores;
}

void EvalReport::add_scene(std::size_t index, const std::vector<InstanceScore>& scores) {
  SceneReport row;
  row.scene = index;
  row.instances = scores.size();
  for (const auto& s : scores) {
    row.mask_iou += s.mask_iou;
    row.box_iou += s.box_iou;
    row.accuracy += s.correct ? 1.0 : 0.0;
  }
  const double total = static_cast<double>(instances);
  const double n = static_cast<double>(scores.size());
  mean_mask_iou = (mean_mask_iou * total + row.mask_iou) / (total + n);
  mean_box_iou = (mean_box_iou * total + row.box_iou) / (total + n);
  accuracy = (accuracy * total + row.accuracy) / (total + n);
  instances += scores.size();
  if (n > 0) {
    row.mask_iou /= n;
    row.box_iou /= n;
    row.accuracy /= n;
  }
  scenes.push_back(row);
}

void EvalReport::write_csv(std::ostream& os) const {
  char buf[128];
  os << "scene,instances,mask_iou,box_iou,cls_accuracy\n";
  for (const auto& r : scenes) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%.6f,%.6f\n", r.scene, r.instances, r.mask_iou, r.box_iou,
                  r.accuracy);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "summary,%zu,%.6f,%.6f,%.6f\n", instances, mean_mask_iou, mean_box_iou, accuracy);
  os << buf;
}

namespace {

std::vector<double> sigmoid_plane(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-logits[i]));
  return out;
}

}  // namespace

std::vector<Prediction> predict_scene(const PANetModel& model, const SyntheticScene& scene,
                                      const std::vector<RoI>& proposals) {
  if (proposals.empty()) return {};
  NoGradGuard no_grad;
  const SyntheticScene* one[] = {&scene};
  const Tensor images = PANetModel::image_batch(one);
  const auto levels = model.features(images, model.image_context(1, false));

  std::vector<RoI> rois = proposals;
  for (RoI& r : rois) r.image = 0;
  const BoxPrediction box = model.box_forward(levels, rois, model.roi_context(rois, 1, false));

  const std::size_t k1 = box.class_logits.dim(1);
  const auto logits = box.class_logits.data();
  const auto deltas = box.box_deltas.data();
  const double W = static_cast<double>(scene.width), H = static_cast<double>(scene.height);

  std::vector<Prediction> preds(rois.size());
  std::vector<RoI> refined(rois.size());
  std::vector<int> fg_class(rois.size());
  for (std::size_t i = 0; i < rois.size(); ++i) {
    const double* row = logits.data() + i * k1;
    preds[i].label = static_cast<int>(std::max_element(row, row + k1) - row);
    fg_class[i] = static_cast<int>(std::max_element(row + 1, row + k1) - row);
    BoxDeltas d;
    for (std::size_t q = 0; q < 4; ++q) d[q] = deltas[i * 4 * (k1 - 1) + 4 * (fg_class[i] - 1) + q];
    refined[i] = decode_box_deltas(rois[i], d, W, H);
    preds[i].box = refined[i];
  }

  const MaskPrediction mask = model.mask_forward(levels, refined, model.roi_context(refined, 1, false));
  const std::size_t k = mask.fused_logits.dim(1), plane = kMaskSize * kMaskSize;
  const auto m = mask.fused_logits.data();
  for (std::size_t i = 0; i < rois.size(); ++i) {
    const std::size_t base = (i * k + static_cast<std::size_t>(fg_class[i] - 1)) * plane;
    preds[i].mask = sigmoid_plane(m.subspan(base, plane));
  }
  return preds;
}

std::vector<Prediction> ground_truth_predictions(const SyntheticScene& scene) {
  std::vector<Prediction> preds;
  for (const Instance& gt : scene.instances) {
    Prediction p;
    p.box = gt.box;
    p.label = gt.class_id;
    p.mask = crop_mask(gt.mask, scene.height, scene.width, gt.box, kMaskSize);
    preds.push_back(std::move(p));
  }
  return preds;
}

std::vector<SyntheticScene> evaluation_scenes(const TrainConfig& cfg) {
  return generate_scenes(mix_seed(cfg.eval_seed, 2), cfg.eval_scenes, cfg.image_size, cfg.max_instances);
}

EvalReport evaluate(const PANetModel& model, const std::vector<SyntheticScene>& scenes) {
  const TrainConfig& cfg = model.config();
  EvalReport report;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto proposals = make_proposals(scenes[i], mix_seed(cfg.eval_seed, 100 + i), cfg.eval_jitter,
                                          cfg.proposal_negatives, cfg.proposal_copies, false);
    report.add_scene(i, score_scene(scenes[i], predict_scene(model, scenes[i], proposals)));
  }
  return report;
}

std::unique_ptr<PANetModel> load_model(const std::string& checkpoint_path) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  auto model = std::make_unique<PANetModel>(parse_config(ckpt.config_text));
  restore_parameters(ckpt, model->registry());
  return model;
}

SourceRatioTable collect_source_stats(const PANetModel& model, const std::vector<SyntheticScene>& scenes,
                                      bool mask_head) {
  const TrainConfig& cfg = model.config();
  if (!cfg.afp) throw ConfigError("stats: source ratios need adaptive feature pooling (afp=true)");
  NoGradGuard no_grad;
  SourceRatioTable table(false);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const std::uint64_t seed = mix_seed(cfg.eval_seed, 5000 + i);
    const auto proposals =
        make_proposals(scenes[i], seed, cfg.proposal_jitter, cfg.proposal_negatives, cfg.proposal_copies);
    const RoiBatch batch =
        sample_rois(proposals, scenes[i], cfg.rois_per_image, cfg.positive_fraction, mix_seed(seed, 7));
    if (batch.size() == 0) continue;
    const SyntheticScene* one[] = {&scenes[i]};
    const auto levels = model.features(PANetModel::image_batch(one), model.image_context(1, false));
    const auto rois = model.assign_levels(batch.rois);
    std::vector<int> groups;
    for (const RoI& r : rois) groups.push_back(r.assigned_level);
    HeadTrace trace;
    if (mask_head) {
      model.mask_forward(levels, rois, model.roi_context(rois, 1, false), &trace);
    } else {
      model.box_forward(levels, rois, model.roi_context(rois, 1, false), &trace);
    }
    table.accumulate(trace.fusion_inputs, groups);
  }
  return table;
}

}  // namespace panet::harness
