#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "voxproto/detect.hpp"
#include "voxproto/mine.hpp"
#include "voxproto/quantize.hpp"

namespace voxproto {

struct ConfusionMatrix {
  int num_prototypes = 0;
  int num_labels = 0;
  std::vector<std::int64_t> counts;  // num_prototypes * num_labels

  ConfusionMatrix() = default;
  ConfusionMatrix(int k, int l)
      : num_prototypes(k), num_labels(l),
        counts(static_cast<std::size_t>(k) * l, 0) {}

  std::int64_t& at(int k, int l) {
    return counts[static_cast<std::size_t>(k) * num_labels + l];
  }
  std::int64_t at(int k, int l) const {
    return counts[static_cast<std::size_t>(k) * num_labels + l];
  }
  std::int64_t total() const;
};

// Maximum-weight bipartite matching on the padded square matrix (Hungarian
// algorithm); returns matched sample weight over total samples.
double linmatch_accuracy(const ConfusionMatrix& cm);

// Minimum-cost assignment for a square cost matrix; exposed for tests.
std::vector<int> hungarian_min_cost(const std::vector<double>& cost, int n);

// Category retrieval: pool ranked by max-over-rotations inner product of
// transformed tensors; returns the mean same-label fraction in the top k.
double precision_at_k(std::span<const ObjectTensor> queries,
                      std::span<const int> query_labels,
                      std::span<const ObjectTensor> pool,
                      std::span<const int> pool_labels,
                      const FeatureTransform& transform,
                      const RotationSet& rots, int k = 10);

// Single-class average precision at the given IoU threshold, pooled over
// scenes, with all-points interpolation. No GT and no detections is a
// perfect 1.0; missing everything is 0.0.
double mean_ap(const std::vector<std::vector<Proposal>>& detections,
               const std::vector<std::vector<Box3D>>& gts,
               double iou_thresh = 0.5);

constexpr int kUnlabeled = -1;

struct LabelMap {
  std::map<int, int> prototype_to_label;  // kUnlabeled when unhit

  int label_of(int prototype_id) const {
    auto it = prototype_to_label.find(prototype_id);
    return it == prototype_to_label.end() ? kUnlabeled : it->second;
  }
};

// Assigns each labeled exemplar to its nearest prototype, majority-labels
// each hit prototype (ties toward the smaller label), and propagates the
// result to every assignment. Exemplars never modify the dictionary.
std::pair<LabelMap, std::vector<int>> few_shot_propagate(
    std::span<const ObjectTensor> exemplars, std::span<const int> exemplar_labels,
    const PrototypeDictionary& dict, const RotationSet& rots,
    std::span<const Assignment> all_assignments);

}  // namespace voxproto
