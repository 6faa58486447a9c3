#include "voxproto/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "voxproto/geometry.hpp"
#include "voxproto/io.hpp"
#include "voxproto/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace voxproto {

namespace {

// stream tags for the per-purpose RNG substreams
constexpr std::uint64_t kJitterStream = 0x1000000;
constexpr std::uint64_t kMiningStream = 0x2000000;

}  // namespace

// ---------------------------------------------------------------------------
// State serialization
// ---------------------------------------------------------------------------

void save_state(const std::string& dir, const PipelineState& state,
                const IterationReport& report) {
  fs::create_directories(dir);
  save_prototypes(dir + "/prototypes.pro1", state.dictionary);
  save_transform(dir + "/transform.ftr1", state.transform);
  save_detector_json(dir + "/detector.json", state.detector);
  json j;
  j["iteration"] = report.iteration;
  j["precision_at_10"] = report.precision_at_10;
  j["linmatch_accuracy"] = report.linmatch_accuracy;
  j["mean_ap"] = report.mean_ap;
  j["quantization_loss"] = report.quantization_loss;
  j["dictionary_size"] = report.dictionary_size;
  j["flags"] = report.flags;
  std::ofstream out(dir + "/report.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + dir + "/report.json");
  out << j.dump(2) << "\n";
}

PipelineState load_state(const std::string& dir) {
  PipelineState state;
  state.dictionary = load_prototypes(dir + "/prototypes.pro1");
  state.transform = load_transform(dir + "/transform.ftr1");
  state.detector = load_detector_json(dir + "/detector.json", state.dictionary);
  std::ifstream in(dir + "/report.json");
  if (in) {
    json j = json::parse(in);
    state.iteration = j.at("iteration").get<int>();
  }
  return state;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

Pipeline::Pipeline(std::vector<SceneRecord> scenes, const PipelineConfig& config)
    : scenes_(std::move(scenes)), config_(config) {
  config_.validate();
  if (scenes_.empty()) throw EmptyDataset("pipeline: no scenes");
  grids_.resize(scenes_.size());
  occs_.resize(scenes_.size());
}

Pipeline Pipeline::from_dataset(const std::string& dataset_dir,
                                const PipelineConfig& config) {
  std::vector<SceneRecord> scenes;
  for (const std::string& dir : list_scene_dirs(dataset_dir)) {
    SceneRecord record;
    record.path = dir;
    record.views = load_scene_views(dir);
    if (auto gt = load_scene_gt(dir)) record.gt = *gt;
    scenes.push_back(std::move(record));
  }
  if (scenes.empty())
    throw EmptyDataset("pipeline: no scene directories under " + dataset_dir);
  return Pipeline(std::move(scenes), config);
}

void Pipeline::ensure_lifted(int scene_index) const {
  if (grids_[scene_index]) return;
  const SceneRecord& scene = scenes_[scene_index];
  std::vector<std::pair<VoxelGrid, OccupancyGrid>> lifted;
  lifted.reserve(scene.views.size());
  for (const PosedImage& view : scene.views)
    lifted.push_back(unproject_image(view, config_.grid));
  auto [fused, occ] = fuse_views(lifted);
  grids_[scene_index] =
      std::make_unique<VoxelGrid>(occupancy_masked(fused, occ));
  occs_[scene_index] = std::make_unique<OccupancyGrid>(std::move(occ));
}

void Pipeline::lift_all() {
  parallel_for(scenes_.size(), [&](std::size_t s) { ensure_lifted(static_cast<int>(s)); });
}

const VoxelGrid& Pipeline::base_grid(int scene) const {
  ensure_lifted(scene);
  return *grids_[scene];
}

const OccupancyGrid& Pipeline::occupancy(int scene) const {
  ensure_lifted(scene);
  return *occs_[scene];
}

std::vector<Box3D> Pipeline::bootstrap_boxes(int scene_index) const {
  const SceneRecord& scene = scenes_[scene_index];
  Rng rng = Rng::derive(config_.seed, kJitterStream + scene_index);
  std::vector<Box2D> boxes2d;
  for (std::size_t v = 0; v < scene.views.size(); ++v) {
    const auto view_boxes = gt_boxes_2d(scene.gt, scene.views[v],
                                        static_cast<int>(v), config_.jitter_px, rng);
    boxes2d.insert(boxes2d.end(), view_boxes.begin(), view_boxes.end());
  }
  const int min_views = std::max(
      1, static_cast<int>(std::ceil(config_.min_views_frac * scene.views.size() - 1e-9)));
  return triangulate_boxes(scene.views, boxes2d, config_.grid, min_views,
                           config_.min_voxels);
}

// ---------------------------------------------------------------------------
// Scan (detect + crop, shared by iteration step (i) and evaluation)
// ---------------------------------------------------------------------------

Pipeline::ScanResult Pipeline::scan(const PipelineState& state) const {
  ScanResult result;
  result.detections.resize(scenes_.size());
  const RotationSet rots = config_.rotations();
  const bool identity = state.transform.is_identity();

  for (std::size_t s = 0; s < scenes_.size(); ++s) {
    ensure_lifted(static_cast<int>(s));
    const VoxelGrid& base = *grids_[s];
    const VoxelGrid grid_t = identity ? base : state.transform.apply(base);
    if (!state.detector.empty())
      result.detections[s] =
          detect_objects(grid_t, state.detector, rots, config_.nms_iou);

    for (const Proposal& proposal : result.detections[s]) {
      result.boxes.push_back(proposal.box);
      result.scene_index.push_back(static_cast<int>(s));
      result.base_tensors.push_back(crop_resize(base, proposal.box));
      result.tensors.push_back(identity ? result.base_tensors.back()
                                        : crop_resize(grid_t, proposal.box));
      int label = kUnlabeled;
      double yaw = 0.0;
      double best = kMinGtIou;
      for (const ObjectGT& gt : scenes_[s].gt.objects) {
        const double iou = iou_3d(proposal.box, gt.box);
        if (iou >= best) {
          best = iou;
          label = gt.category;
          yaw = gt.yaw_deg;
        }
      }
      result.gt_labels.push_back(label);
      result.gt_yaws.push_back(yaw);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

std::pair<PipelineState, IterationReport> Pipeline::bootstrap() {
  lift_all();
  const RotationSet rots = config_.rotations();

  std::vector<std::vector<Box3D>> per_scene(scenes_.size());
  parallel_for(scenes_.size(), [&](std::size_t s) {
    per_scene[s] = bootstrap_boxes(static_cast<int>(s));
  });

  std::vector<ObjectTensor> exemplars;
  std::vector<double> ext[3];
  for (std::size_t s = 0; s < scenes_.size(); ++s) {
    for (const Box3D& box : per_scene[s]) {
      exemplars.push_back(crop_resize(*grids_[s], box));
      for (int a = 0; a < 3; ++a) ext[a].push_back(box.extent()[a]);
    }
  }
  if (exemplars.empty())
    throw EmptyDataset("bootstrap: triangulation produced no objects");

  PipelineState state;
  state.iteration = 0;
  state.transform = FeatureTransform::identity(4);
  state.dictionary =
      init_dictionary(exemplars, config_.k_max, config_.diversity_thresh, rots);

  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  state.detector.confidence_threshold = config_.detector_conf;
  state.detector.stride_voxels = config_.detector_stride;
  state.detector.box_size = Vec3(median(ext[0]), median(ext[1]), median(ext[2]));
  for (const Prototype& p : state.dictionary.prototypes) {
    state.detector.templates.push_back(normalized_template(p.tensor));
    state.detector.template_prototype_ids.push_back(p.id);
  }

  IterationReport report = evaluate(state);
  return {std::move(state), std::move(report)};
}

// ---------------------------------------------------------------------------
// One iteration of the loop
// ---------------------------------------------------------------------------

std::pair<PipelineState, IterationReport> Pipeline::run_iteration(
    const PipelineState& state) {
  const RotationSet rots = config_.rotations();
  const int iteration = state.iteration + 1;
  std::vector<std::string> flags;

  PipelineState next;
  next.iteration = iteration;
  next.dictionary = state.dictionary;
  next.transform = state.transform;
  next.detector = state.detector;

  // (i) detection with the current detector
  const ScanResult scanned = scan(state);
  if (scanned.tensors.empty()) {
    flags.push_back("no_detections");
    IterationReport report = evaluate(next);
    report.iteration = iteration;
    report.flags = std::move(flags);
    return {std::move(next), std::move(report)};
  }

  // (ii) cross-scene correspondence mining + transform fit. Matching runs in
  // the current feature space; the training pairs are re-read from the base
  // space so the transform always maps base features.
  if (config_.mining_rounds > 0 && scanned.tensors.size() >= 2) {
    Rng rng = Rng::derive(config_.seed, kMiningStream + iteration);
    const PoolPair pools = build_pools(scanned.tensors, config_.pool_size, rng);
    MiningConfig mcfg;
    mcfg.rounds = config_.mining_rounds;
    mcfg.top_n = config_.top_n;
    mcfg.top_retrievals = config_.top_retrievals;
    mcfg.negatives_per_positive = config_.negatives_per_positive;
    std::vector<Correspondence> corrs =
        mine_correspondences(pools, rots, mcfg, rng);
    for (Correspondence& corr : corrs) {
      corr.query.data = extract_patch_data(
          scanned.base_tensors[corr.query.object_index], corr.query.corner);
      corr.target.data = extract_patch_data(
          rotate_tensor(scanned.base_tensors[corr.target.object_index],
                        corr.rotation_deg),
          corr.target.corner);
    }
    ContrastiveConfig ccfg;
    ccfg.margin_pos = config_.margin_pos;
    ccfg.margin_neg = config_.margin_neg;
    ccfg.learning_rate = config_.learning_rate;
    ccfg.epochs = config_.epochs;
    try {
      next.transform = contrastive_fit(state.transform, corrs, ccfg);
    } catch (const NoPositives&) {
      flags.push_back("no_positive_correspondences");
    } catch (const NoNegatives&) {
      flags.push_back("no_negative_correspondences");
    }
  } else if (config_.mining_rounds > 0) {
    flags.push_back("too_few_detections_for_mining");
  }

  // (iii) prototype update on the refreshed features
  {
    std::vector<ObjectTensor> tensors(scanned.base_tensors.size());
    parallel_for(tensors.size(), [&](std::size_t i) {
      tensors[i] = next.transform.apply(scanned.base_tensors[i]);
    });
    const EmResult em = em_refine(tensors, next.dictionary, config_.em_iters,
                                  config_.em_loss_tol, rots);
    next.dictionary = em.dict;
  }

  // (iv) pseudo-label against the updated prototypes, then refit the detector
  {
    std::vector<LabeledProposal> labeled;
    const bool identity = next.transform.is_identity();
    for (std::size_t s = 0; s < scenes_.size(); ++s) {
      if (scanned.detections[s].empty()) continue;
      const VoxelGrid& base = *grids_[s];
      const VoxelGrid grid_t = identity ? base : next.transform.apply(base);
      const auto scene_labeled = label_proposals(
          scanned.detections[s], grid_t, next.dictionary, rots,
          config_.valid_thresh, config_.invalid_thresh);
      labeled.insert(labeled.end(), scene_labeled.begin(), scene_labeled.end());
    }
    DetectorConfig dcfg;
    dcfg.confidence_threshold = config_.detector_conf;
    dcfg.stride_voxels = config_.detector_stride;
    dcfg.nms_iou = config_.nms_iou;
    try {
      next.detector = refit_detector(labeled, next.dictionary, dcfg);
    } catch (const NoValidProposals&) {
      flags.push_back("no_valid_proposals");
    }
  }

  IterationReport report = evaluate(next);
  report.iteration = iteration;
  report.flags = std::move(flags);
  return {std::move(next), std::move(report)};
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

IterationReport Pipeline::evaluate(const PipelineState& state) const {
  IterationReport report;
  report.iteration = state.iteration;
  report.dictionary_size = state.dictionary.size();
  const RotationSet rots = config_.rotations();

  const ScanResult scanned = scan(state);

  std::vector<std::vector<Box3D>> gt_boxes(scenes_.size());
  for (std::size_t s = 0; s < scenes_.size(); ++s)
    for (const ObjectGT& gt : scenes_[s].gt.objects) gt_boxes[s].push_back(gt.box);
  report.mean_ap = mean_ap(scanned.detections, gt_boxes, 0.5);

  // labeled subset feeds clustering and retrieval metrics
  std::vector<ObjectTensor> labeled_t, labeled_base;
  std::vector<int> labels;
  for (std::size_t i = 0; i < scanned.tensors.size(); ++i) {
    if (scanned.gt_labels[i] == kUnlabeled) continue;
    labeled_t.push_back(scanned.tensors[i]);
    labeled_base.push_back(scanned.base_tensors[i]);
    labels.push_back(scanned.gt_labels[i]);
  }
  if (labeled_t.empty() || state.dictionary.empty()) {
    report.flags.push_back("no_labeled_detections");
    return report;
  }

  const std::vector<Assignment> assignments =
      assign_all(labeled_t, state.dictionary, rots);
  report.quantization_loss =
      quantization_loss(labeled_t, assignments, state.dictionary);

  // LIN-MATCH over prototype ids x GT categories
  {
    std::map<int, int> proto_slot, label_slot;
    for (const Prototype& p : state.dictionary.prototypes)
      proto_slot.emplace(p.id, static_cast<int>(proto_slot.size()));
    for (int label : labels) label_slot.emplace(label, 0);
    int next_slot = 0;
    for (auto& [label, slot] : label_slot) slot = next_slot++;
    ConfusionMatrix cm(static_cast<int>(proto_slot.size()),
                       static_cast<int>(label_slot.size()));
    for (std::size_t i = 0; i < assignments.size(); ++i)
      cm.at(proto_slot.at(assignments[i].prototype_id), label_slot.at(labels[i])) += 1;
    report.linmatch_accuracy = linmatch_accuracy(cm);
  }

  // retrieval on an even/odd split of the labeled crops
  {
    std::vector<ObjectTensor> queries, pool;
    std::vector<int> q_labels, p_labels;
    for (std::size_t i = 0; i < labeled_base.size(); ++i) {
      if (i % 2 == 0) {
        queries.push_back(labeled_base[i]);
        q_labels.push_back(labels[i]);
      } else {
        pool.push_back(labeled_base[i]);
        p_labels.push_back(labels[i]);
      }
    }
    if (!queries.empty() && !pool.empty())
      report.precision_at_10 = precision_at_k(queries, q_labels, pool, p_labels,
                                              state.transform, rots, 10);
    else
      report.flags.push_back("too_few_detections_for_retrieval");
  }
  return report;
}

}  // namespace voxproto
