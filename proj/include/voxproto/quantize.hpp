#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "voxproto/detect.hpp"
#include "voxproto/types.hpp"
#include "voxproto/voxel.hpp"

namespace voxproto {

struct Prototype {
  int id = 0;
  ObjectTensor tensor;
  std::int64_t assigned_count = 0;
};

struct PrototypeDictionary {
  std::vector<Prototype> prototypes;
  int k_max = 50;
  double diversity_thresh = 0.8;

  bool empty() const { return prototypes.empty(); }
  int size() const { return static_cast<int>(prototypes.size()); }
  const Prototype* find(int id) const;
};

struct Assignment {
  int object_index = -1;
  int prototype_id = -1;
  double rotation_deg = 0.0;
  double distance = 0.0;
};

struct SceneParseRecord {
  Box3D box;
  int prototype_id = -1;
  double rotation_deg = 0.0;
  double confidence = 0.0;
};

using SceneParse = std::vector<SceneParseRecord>;

// Incremental diversity-filtered initialization: an exemplar becomes a new
// prototype only when its best rotation-aware cosine to every admitted
// prototype stays below diversity_thresh (and capacity remains).
PrototypeDictionary init_dictionary(std::span<const ObjectTensor> exemplars,
                                    int k_max, double diversity_thresh,
                                    const RotationSet& rots);

// Exhaustive argmin of l2_distance(e_k, rotate(obj, R)) over prototypes and
// rotations; ties break toward smaller k, then smaller R.
Assignment assign(const ObjectTensor& obj, const PrototypeDictionary& dict,
                  const RotationSet& rots);

std::vector<Assignment> assign_all(std::span<const ObjectTensor> objects,
                                   const PrototypeDictionary& dict,
                                   const RotationSet& rots);

// Closed-form M-step: each prototype with assignments becomes the mean of its
// rotation-aligned members; others are untouched. assigned_count tracks the
// new assignment load.
PrototypeDictionary update_prototypes(std::span<const ObjectTensor> objects,
                                      std::span<const Assignment> assignments,
                                      const PrototypeDictionary& dict);

// Sum of unsquared distances (the reported objective).
double quantization_loss(std::span<const ObjectTensor> objects,
                         std::span<const Assignment> assignments,
                         const PrototypeDictionary& dict);

// Sum of squared distances; the quantity the mean M-step provably decreases.
double quantization_loss_squared(std::span<const ObjectTensor> objects,
                                 std::span<const Assignment> assignments,
                                 const PrototypeDictionary& dict);

struct EmConfig {
  int k_max = 50;
  double diversity_thresh = 0.8;
  int max_iters = 20;
  double loss_tol = 1e-6;
};

struct EmResult {
  PrototypeDictionary dict;
  std::vector<Assignment> assignments;
  std::vector<double> loss_history;          // unsquared, per iteration
  std::vector<double> loss_squared_history;  // stopping/monotonicity objective
  int iterations = 0;
};

EmResult em_fit(std::span<const ObjectTensor> objects, const EmConfig& config,
                const RotationSet& rots);

// Continue EM from an existing dictionary (no re-initialization).
EmResult em_refine(std::span<const ObjectTensor> objects,
                   const PrototypeDictionary& dict, int max_iters,
                   double loss_tol, const RotationSet& rots);

// detect -> crop -> assign; one record per surviving proposal.
SceneParse parse_scene(const VoxelGrid& grid, const Detector& det,
                       const PrototypeDictionary& dict, const RotationSet& rots);

}  // namespace voxproto
