#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "panelnet/checkpoint.hpp"
#include "panelnet/metrics.hpp"
#include "panelnet/model.hpp"
#include "panelnet/optim.hpp"
#include "panelnet/synthetic_rooms.hpp"

namespace panelnet {

// Everything a training run needs besides the data and output paths.
// Full-scale reference protocol (not run here): batch 16, lr 1e-4, epoch
// counts per dataset; desk runs are step-based.
struct RunConfig {
  std::string scale = "desk";
  ModelConfig model;
  AdamConfig adam;
  int batch = 1;        // scenes per forward pass
  int accumulate = 1;   // forward passes per optimizer step
  std::int64_t steps = 2000;
  std::int64_t eval_every = 250;
  std::uint64_t seed = 0;
  MergeMode merge = MergeMode::kConfidence;
  bool augment = true;
  int rotate_step = 0;  // 0: the panel stride
  double gamma_lo = 0.8, gamma_hi = 1.25;
  std::vector<double> class_weights;  // empty: all ones
  // Batch-norm uses its running statistics during training steps too.
  bool freeze_bn = false;
  // Same, from this step on (-1: never). Lets the last steps train under the
  // statistics used at evaluation time.
  std::int64_t freeze_bn_step = -1;

  // key=value text; unknown keys and invalid combinations throw ConfigError.
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
  std::string serialize() const;
  void validate() const;
};

// Scene `slot` of the data order: epoch-wise permutations drawn from the seed,
// so any step's batch is a pure function of (seed, step).
int scene_for_slot(std::uint64_t seed, std::int64_t slot, int num_scenes);

std::vector<RoomSample> load_dataset(const std::filesystem::path& root);
// DataError unless every sample matches the model's ERP size.
void check_dataset(const std::vector<RoomSample>& data, const ModelConfig& model);

// Model weights (parameters and buffers) plus the serialized config.
template <typename T>
void save_model(const PanelNet<T>& net, Checkpoint& ck);
// VersionError on any missing, extra or mis-shaped tensor.
template <typename T>
void load_model(PanelNet<T>& net, const Checkpoint& ck);
ModelConfig checkpoint_model_config(const Checkpoint& ck);

struct StepStats {
  double loss = 0;
};

struct EvalResult {
  std::optional<DepthMetrics> depth;
  std::optional<SegMetrics> seg;
  std::optional<double> iou3d;
  std::int64_t clamped_boundary = 0;
  std::string row(std::int64_t step) const { return metrics_csv_row(step, depth, seg, iou3d); }
};

template <typename T>
class Trainer {
 public:
  Trainer(const RunConfig& cfg, std::vector<RoomSample> data);

  // Loss of one forward pass over `scenes`, graph attached.
  Tensor<T> loss(const std::vector<const RoomSample*>& scenes, bool training);
  // One optimizer step: `accumulate` passes of `batch` scenes each.
  StepStats step();
  // Trains to cfg.steps, writing loss.csv, metrics.csv, last.pnck and
  // best.pnck under `out`. Resumes from `out`/last.pnck when `resume` is set.
  void run(const std::filesystem::path& out, bool resume, std::function<void(const std::string&)> log = {});

  EvalResult evaluate(MergeMode merge);

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ck);

  PanelNet<T>& model() { return *net_; }
  Adam<T>& optimizer() { return *adam_; }
  std::int64_t step_count() const { return step_; }
  const RunConfig& config() const { return cfg_; }

 private:
  // Loss value driving best.pnck selection (lower is better).
  double selection_score(const EvalResult& r) const;

  RunConfig cfg_;
  std::vector<RoomSample> data_;
  std::unique_ptr<PanelNet<T>> net_;
  std::unique_ptr<Adam<T>> adam_;
  std::int64_t step_ = 0;
  double best_ = INFINITY;
};

// Metrics of `net` on `data` computed from merged ERP predictions with
// batch-norm in inference mode. With `oracle`, ground truth stands in for the
// prediction.
template <typename T>
EvalResult evaluate_model(PanelNet<T>& net, const std::vector<RoomSample>& data, MergeMode merge,
                          bool oracle = false);

// Full-ERP prediction for one rgb raster: depth (1 x H x W), labels or, for
// layout, the boundary as 1 x 1 x W.
struct Inference {
  ErpTensor values;
  std::optional<LabelMap> labels;
  std::optional<double> room_height;
};
template <typename T>
Inference infer(PanelNet<T>& net, const ErpTensor& rgb, MergeMode merge);

// Named finite-difference suites used by the gradcheck subcommand.
struct GradCheckOutcome {
  std::string name;
  bool passed = false;
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // elements next to a kink
  std::string detail;
};
std::vector<std::string> gradcheck_modules();
std::vector<GradCheckOutcome> run_gradchecks(const std::string& module, int seeds);

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace panelnet
