#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "panet/harness/model.hpp"
#include "panet/harness/scene.hpp"
#include "panet/roi_pooling.hpp"

namespace panet::harness {

/// A detection with its mask, as produced by the model or built from GT.
struct Prediction {
  RoI box;                    // refined box, used for matching
  int label = 0;              // argmax over background + classes
  std::vector<double> mask;   // kMaskSize^2 foreground probabilities over `box`
};

struct InstanceScore {
  double mask_iou = 0.0;
  double box_iou = 0.0;
  bool correct = false;
};

/// Per GT instance: the prediction with the highest box IoU, its pasted mask
/// IoU against the GT mask, and whether its label matches.
std::vector<InstanceScore> score_scene(const SyntheticScene& scene, const std::vector<Prediction>& predictions);

struct SceneReport {
  std::size_t scene = 0;
  std::size_t instances = 0;
  double mask_iou = 0.0;
  double box_iou = 0.0;
  double accuracy = 0.0;
};

struct EvalReport {
  std::vector<SceneReport> scenes;
  std::size_t instances = 0;
  double mean_mask_iou = 0.0;  // over all GT instances
  double mean_box_iou = 0.0;
  double accuracy = 0.0;

  void add_scene(std::size_t index, const std::vector<InstanceScore>& scores);
  /// Header scene,instances,mask_iou,box_iou,cls_accuracy; a final "summary" row.
  void write_csv(std::ostream& os) const;
};

/// Predictions of the model (eval-mode norms) for one scene's proposals.
std::vector<Prediction> predict_scene(const PANetModel& model, const SyntheticScene& scene,
                                      const std::vector<RoI>& proposals);

/// Ground truth as predictions, masks resampled through the kMaskSize grid.
std::vector<Prediction> ground_truth_predictions(const SyntheticScene& scene);

/// Held-out scenes from cfg.eval_seed, disjoint in seed stream from training.
std::vector<SyntheticScene> evaluation_scenes(const TrainConfig& cfg);

EvalReport evaluate(const PANetModel& model, const std::vector<SyntheticScene>& scenes);

/// Rebuilds the model saved in a checkpoint.
std::unique_ptr<PANetModel> load_model(const std::string& checkpoint_path);

/// Max-fusion source tallies of the box head's first-layer outputs, grouped by
/// assigned level, over the sampled RoIs of `scenes`. Requires adaptive pooling.
/// Elements on which all four levels agree are not counted.
SourceRatioTable collect_source_stats(const PANetModel& model, const std::vector<SyntheticScene>& scenes,
                                      bool mask_head = false);

}  // namespace panet::harness
