#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "panet/harness/config.hpp"
#include "panet/harness/losses.hpp"
#include "panet/harness/model.hpp"
#include "panet/harness/optimizer.hpp"
#include "panet/harness/scene.hpp"

namespace panet::harness {

/// Raised when a loss term becomes NaN or infinite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MetricsRow {
  std::size_t step = 0;
  double lr = 0.0;
  double cls = 0.0;
  double box = 0.0;
  double mask = 0.0;
  double total = 0.0;
};

inline constexpr char kMetricsHeader[] = "step,lr,cls,box,mask,total";
std::string format_metrics_row(const MetricsRow& row);
void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows);

/// Deterministic 64-bit mix used to derive per-step seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Owns the model, optimizer and training scenes; step() runs one SGD update.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  /// Builds one training batch, runs forward/backward and the optimizer.
  MetricsRow step();
  /// Forward and losses only (no update) for the given scenes; used by tests.
  LossTerms losses_for(const std::vector<const SyntheticScene*>& scenes, std::uint64_t seed);

  std::size_t steps_done() const { return step_; }
  PANetModel& model() { return *model_; }
  const std::vector<SyntheticScene>& scenes() const { return scenes_; }

 private:
  std::vector<const SyntheticScene*> next_scenes();

  TrainConfig cfg_;
  std::unique_ptr<PANetModel> model_;
  std::unique_ptr<SGD> sgd_;
  std::vector<SyntheticScene> scenes_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
  std::size_t step_ = 0;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  std::string metrics_path;
  std::string checkpoint_path;
  double seconds = 0.0;
};

/// Runs cfg.steps steps and writes out_dir/metrics.csv and out_dir/model.ckpt.
TrainResult train(const TrainConfig& cfg, const std::string& out_dir);

/// Median of total loss over 1-based steps [first, last], clipped to the rows present.
double median_total(const std::vector<MetricsRow>& rows, std::size_t first, std::size_t last);

}  // namespace panet::harness
