#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "voxproto/detect.hpp"
#include "voxproto/eval.hpp"
#include "voxproto/mine.hpp"
#include "voxproto/quantize.hpp"
#include "voxproto/synth.hpp"

namespace voxproto {

struct PipelineConfig {
  GridSpec grid;
  double rotation_step_deg = 10.0;
  int k_max = 50;
  double diversity_thresh = 0.8;
  double valid_thresh = 0.8;
  double invalid_thresh = 0.65;
  double detector_conf = 0.9;
  int detector_stride = 4;
  double nms_iou = 0.3;
  int em_iters = 5;
  double em_loss_tol = 1e-6;
  int mining_rounds = 8;
  int pool_size = 1000;
  int top_n = 30;
  int top_retrievals = 200;
  int negatives_per_positive = 1;
  double margin_pos = 0.5;
  double margin_neg = 0.3;
  double learning_rate = 1e-3;
  int epochs = 30;
  double min_views_frac = 2.0 / 3.0;
  int min_voxels = 8;
  double jitter_px = 0.0;
  std::uint64_t seed = 0;

  PipelineConfig();
  void validate() const;
  RotationSet rotations() const { return RotationSet::with_step(rotation_step_deg); }
};

struct IterationReport {
  int iteration = 0;
  double precision_at_10 = 0.0;
  double linmatch_accuracy = 0.0;
  double mean_ap = 0.0;
  double quantization_loss = 0.0;
  int dictionary_size = 0;
  std::vector<std::string> flags;
};

struct PipelineState {
  int iteration = 0;
  PrototypeDictionary dictionary;
  FeatureTransform transform;
  Detector detector;
};

void save_state(const std::string& dir, const PipelineState& state,
                const IterationReport& report);
PipelineState load_state(const std::string& dir);

struct SceneRecord {
  std::vector<PosedImage> views;
  SceneGT gt;
  std::string path;
};

// Orchestrates the iterative loop over a fixed dataset. Lifted feature grids
// are cached per scene; every step is a pure function of (state, config,
// seed, iteration index), so serialized states replay bit-exactly.
class Pipeline {
 public:
  Pipeline(std::vector<SceneRecord> scenes, const PipelineConfig& config);
  static Pipeline from_dataset(const std::string& dataset_dir,
                               const PipelineConfig& config);

  std::pair<PipelineState, IterationReport> bootstrap();
  std::pair<PipelineState, IterationReport> run_iteration(const PipelineState& state);

  IterationReport evaluate(const PipelineState& state) const;

  // One pass over all scenes with the state's detector: per-scene proposals
  // plus the cropped object tensors in both feature spaces. GT labels come
  // from the best-IoU GT box (kUnlabeled below kMinGtIou).
  struct ScanResult {
    std::vector<std::vector<Proposal>> detections;  // per scene
    std::vector<ObjectTensor> tensors;              // transformed features
    std::vector<ObjectTensor> base_tensors;         // pre-transform features
    std::vector<Box3D> boxes;
    std::vector<int> scene_index;
    std::vector<int> gt_labels;
    std::vector<double> gt_yaws;
  };
  ScanResult scan(const PipelineState& state) const;

  // Triangulated bootstrap boxes for one scene (jittered GT 2D boxes).
  std::vector<Box3D> bootstrap_boxes(int scene_index) const;

  void lift_all();

  const PipelineConfig& config() const { return config_; }
  const std::vector<SceneRecord>& scenes() const { return scenes_; }
  const VoxelGrid& base_grid(int scene) const;
  const OccupancyGrid& occupancy(int scene) const;

  static constexpr double kMinGtIou = 0.25;

 private:
  void ensure_lifted(int scene_index) const;

  std::vector<SceneRecord> scenes_;
  PipelineConfig config_;
  mutable std::vector<std::unique_ptr<VoxelGrid>> grids_;     // masked fused features
  mutable std::vector<std::unique_ptr<OccupancyGrid>> occs_;
};

}  // namespace voxproto
