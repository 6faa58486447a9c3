#pragma once

#include <span>
#include <utility>
#include <vector>

#include "voxproto/types.hpp"
#include "voxproto/voxel.hpp"

namespace voxproto {

struct Prototype;
struct PrototypeDictionary;

struct Proposal {
  Box3D box;
  double confidence = 0.0;
};

enum class ProposalLabel { Valid, Invalid, Unlabeled };

struct LabeledProposal {
  Proposal proposal;
  ProposalLabel label = ProposalLabel::Unlabeled;
  double prototype_sim = 0.0;
  double surround_sim = 0.0;
  int matched_prototype = -1;  // argmax prototype of prototype_sim
};

// Rotation-pooled matched-filter bank over prototype templates. Templates
// are L2-normalized prototype tensors; a window fires when its best
// cosine over (template, rotation) clears confidence_threshold.
struct Detector {
  std::vector<ObjectTensor> templates;
  std::vector<int> template_prototype_ids;
  double confidence_threshold = 0.9;
  int stride_voxels = 4;
  Vec3 box_size = Vec3::Zero();

  bool empty() const { return templates.empty(); }
};

struct DetectorConfig {
  double confidence_threshold = 0.9;
  int stride_voxels = 4;
  // Window edge lengths in meters; non-positive entries mean "use the
  // per-axis median of the VALID boxes at refit time".
  Vec3 box_size = Vec3::Zero();
  double nms_iou = 0.3;
};

double iou_3d(const Box3D& a, const Box3D& b);

// Multi-view bootstrap: one vote per view where the voxel projects inside a
// 2D box and is not carved Free by that view's raycast; voxels with at least
// min_views votes form 26-connected components that become tight AABBs.
// Components below min_voxels are dropped.
std::vector<Box3D> triangulate_boxes(const std::vector<PosedImage>& views,
                                     const std::vector<Box2D>& boxes2d,
                                     const GridSpec& spec, int min_views,
                                     int min_voxels = 8);

// Mean cosine similarity between the box crop and its six axis-translated
// neighbors (each shifted by the box extent, clipped to the grid). Neighbors
// that vanish after clipping contribute 0.
double center_surround_sim(const VoxelGrid& grid, const Box3D& box);

std::vector<LabeledProposal> label_proposals(std::span<const Proposal> proposals,
                                             const VoxelGrid& grid,
                                             const PrototypeDictionary& dict,
                                             const RotationSet& rots,
                                             double valid_thresh = 0.8,
                                             double invalid_thresh = 0.65);

Detector refit_detector(std::span<const LabeledProposal> labeled,
                        const PrototypeDictionary& dict,
                        const DetectorConfig& config);

std::vector<Proposal> detect_objects(const VoxelGrid& grid, const Detector& det,
                                     const RotationSet& rots,
                                     double nms_iou = 0.3);

// Raw per-window scores before thresholding and NMS; the unit for oracle
// comparisons.
std::vector<std::pair<Box3D, double>> detect_score_map(const VoxelGrid& grid,
                                                       const Detector& det,
                                                       const RotationSet& rots);

std::vector<Proposal> nms_3d(std::span<const Proposal> proposals,
                             double iou_thresh);

// Unit-L2 copy of a prototype tensor (shared by refit and state reload).
ObjectTensor normalized_template(const ObjectTensor& t);

}  // namespace voxproto
