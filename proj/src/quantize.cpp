#include "voxproto/quantize.hpp"

#include <algorithm>
#include <cmath>

#include "voxproto/parallel.hpp"

namespace voxproto {

const Prototype* PrototypeDictionary::find(int id) const {
  for (const Prototype& p : prototypes)
    if (p.id == id) return &p;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

PrototypeDictionary init_dictionary(std::span<const ObjectTensor> exemplars,
                                    int k_max, double diversity_thresh,
                                    const RotationSet& rots) {
  if (exemplars.empty())
    throw std::invalid_argument("init_dictionary: need at least one exemplar");
  std::vector<RotationPlan> plans;
  for (double angle : rots.angles) plans.push_back(make_rotation_plan(angle));

  PrototypeDictionary dict;
  dict.k_max = k_max;
  dict.diversity_thresh = diversity_thresh;
  for (const ObjectTensor& exemplar : exemplars) {
    if (dict.size() >= k_max) break;
    bool admit = true;
    if (!dict.empty()) {
      // max rotation-aware cosine against every admitted prototype
      double best = -2.0;
      for (const RotationPlan& plan : plans) {
        const ObjectTensor rotated = apply_rotation(plan, exemplar);
        for (const Prototype& p : dict.prototypes)
          best = std::max(best, cosine_similarity(p.tensor, rotated));
        if (best >= diversity_thresh) break;
      }
      admit = best < diversity_thresh;
    }
    if (!admit) continue;
    Prototype p;
    p.id = dict.size();
    p.tensor = exemplar;
    p.assigned_count = 1;
    dict.prototypes.push_back(std::move(p));
  }
  return dict;
}

// ---------------------------------------------------------------------------
// E-step
// ---------------------------------------------------------------------------

namespace {

Assignment assign_with_plans(const ObjectTensor& obj,
                             const PrototypeDictionary& dict,
                             const std::vector<RotationPlan>& plans,
                             const std::vector<double>& angles) {
  std::vector<ObjectTensor> rotated;
  rotated.reserve(plans.size());
  for (const RotationPlan& plan : plans) rotated.push_back(apply_rotation(plan, obj));

  Assignment best;
  best.distance = std::numeric_limits<double>::infinity();
  for (const Prototype& p : dict.prototypes) {
    for (std::size_t r = 0; r < rotated.size(); ++r) {
      const double dist = l2_distance(p.tensor, rotated[r]);
      if (dist < best.distance) {  // scan order realizes the (k, R) tie rule
        best.distance = dist;
        best.prototype_id = p.id;
        best.rotation_deg = angles[r];
      }
    }
  }
  return best;
}

}  // namespace

Assignment assign(const ObjectTensor& obj, const PrototypeDictionary& dict,
                  const RotationSet& rots) {
  if (dict.empty()) throw EmptyDictionary("assign: prototype dictionary is empty");
  std::vector<RotationPlan> plans;
  for (double angle : rots.angles) plans.push_back(make_rotation_plan(angle));
  return assign_with_plans(obj, dict, plans, rots.angles);
}

std::vector<Assignment> assign_all(std::span<const ObjectTensor> objects,
                                   const PrototypeDictionary& dict,
                                   const RotationSet& rots) {
  if (dict.empty()) throw EmptyDictionary("assign_all: prototype dictionary is empty");
  std::vector<RotationPlan> plans;
  for (double angle : rots.angles) plans.push_back(make_rotation_plan(angle));
  std::vector<Assignment> out(objects.size());
  parallel_for(objects.size(), [&](std::size_t i) {
    out[i] = assign_with_plans(objects[i], dict, plans, rots.angles);
    out[i].object_index = static_cast<int>(i);
  });
  return out;
}

// ---------------------------------------------------------------------------
// M-step
// ---------------------------------------------------------------------------

PrototypeDictionary update_prototypes(std::span<const ObjectTensor> objects,
                                      std::span<const Assignment> assignments,
                                      const PrototypeDictionary& dict) {
  PrototypeDictionary out = dict;
  if (out.empty()) return out;
  const int channels = out.prototypes.front().tensor.channels;
  const std::size_t len = out.prototypes.front().tensor.data.size();

  std::vector<std::vector<double>> sums(out.prototypes.size());
  std::vector<std::int64_t> counts(out.prototypes.size(), 0);
  std::vector<int> id_to_slot;
  for (std::size_t s = 0; s < out.prototypes.size(); ++s) {
    const int id = out.prototypes[s].id;
    if (id >= static_cast<int>(id_to_slot.size())) id_to_slot.resize(id + 1, -1);
    id_to_slot[id] = static_cast<int>(s);
  }

  // Accumulate rotated members in ascending assignment order.
  for (const Assignment& a : assignments) {
    if (a.prototype_id < 0 || a.prototype_id >= static_cast<int>(id_to_slot.size()) ||
        id_to_slot[a.prototype_id] < 0)
      throw std::invalid_argument("update_prototypes: assignment references missing prototype");
    const int slot = id_to_slot[a.prototype_id];
    if (a.object_index < 0 || a.object_index >= static_cast<int>(objects.size()))
      throw std::invalid_argument("update_prototypes: bad object index");
    const ObjectTensor rotated = rotate_tensor(objects[a.object_index], a.rotation_deg);
    if (sums[slot].empty()) sums[slot].assign(len, 0.0);
    for (std::size_t i = 0; i < len; ++i) sums[slot][i] += rotated.data[i];
    ++counts[slot];
  }

  for (std::size_t s = 0; s < out.prototypes.size(); ++s) {
    if (counts[s] == 0) continue;  // unassigned prototypes stay put
    ObjectTensor mean(channels);
    for (std::size_t i = 0; i < len; ++i)
      mean.data[i] = static_cast<float>(sums[s][i] / counts[s]);
    out.prototypes[s].tensor = std::move(mean);
    out.prototypes[s].assigned_count = counts[s];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Objectives
// ---------------------------------------------------------------------------

double quantization_loss(std::span<const ObjectTensor> objects,
                         std::span<const Assignment> assignments,
                         const PrototypeDictionary& dict) {
  double acc = 0.0;
  for (const Assignment& a : assignments) {
    const Prototype* p = dict.find(a.prototype_id);
    if (!p) throw std::invalid_argument("quantization_loss: missing prototype");
    acc += l2_distance(p->tensor, rotate_tensor(objects[a.object_index], a.rotation_deg));
  }
  return acc;
}

double quantization_loss_squared(std::span<const ObjectTensor> objects,
                                 std::span<const Assignment> assignments,
                                 const PrototypeDictionary& dict) {
  double acc = 0.0;
  for (const Assignment& a : assignments) {
    const Prototype* p = dict.find(a.prototype_id);
    if (!p) throw std::invalid_argument("quantization_loss_squared: missing prototype");
    const double dist =
        l2_distance(p->tensor, rotate_tensor(objects[a.object_index], a.rotation_deg));
    acc += dist * dist;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// EM
// ---------------------------------------------------------------------------

namespace {

EmResult em_loop(std::span<const ObjectTensor> objects, PrototypeDictionary dict,
                 int max_iters, double loss_tol, const RotationSet& rots) {
  EmResult result;
  result.dict = std::move(dict);
  double prev_sq = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    result.assignments = assign_all(objects, result.dict, rots);
    result.dict = update_prototypes(objects, result.assignments, result.dict);
    const double sq = quantization_loss_squared(objects, result.assignments, result.dict);
    result.loss_squared_history.push_back(sq);
    result.loss_history.push_back(
        quantization_loss(objects, result.assignments, result.dict));
    result.iterations = iter + 1;
    if (prev_sq - sq < loss_tol) break;
    prev_sq = sq;
  }
  // final E-step so assignments are consistent with the returned dictionary
  result.assignments = assign_all(objects, result.dict, rots);
  return result;
}

}  // namespace

EmResult em_fit(std::span<const ObjectTensor> objects, const EmConfig& config,
                const RotationSet& rots) {
  if (objects.empty()) throw std::invalid_argument("em_fit: need at least one object");
  PrototypeDictionary dict =
      init_dictionary(objects, config.k_max, config.diversity_thresh, rots);
  return em_loop(objects, std::move(dict), config.max_iters, config.loss_tol, rots);
}

EmResult em_refine(std::span<const ObjectTensor> objects,
                   const PrototypeDictionary& dict, int max_iters,
                   double loss_tol, const RotationSet& rots) {
  if (objects.empty()) throw std::invalid_argument("em_refine: need at least one object");
  if (dict.empty()) throw EmptyDictionary("em_refine: prototype dictionary is empty");
  return em_loop(objects, dict, max_iters, loss_tol, rots);
}

// ---------------------------------------------------------------------------
// Scene parsing
// ---------------------------------------------------------------------------

SceneParse parse_scene(const VoxelGrid& grid, const Detector& det,
                       const PrototypeDictionary& dict, const RotationSet& rots) {
  if (dict.empty()) throw EmptyDictionary("parse_scene: prototype dictionary is empty");
  const std::vector<Proposal> proposals = detect_objects(grid, det, rots);
  SceneParse parse;
  parse.reserve(proposals.size());
  for (const Proposal& proposal : proposals) {
    const Assignment a = assign(crop_resize(grid, proposal.box), dict, rots);
    SceneParseRecord record;
    record.box = proposal.box;
    record.prototype_id = a.prototype_id;
    record.rotation_deg = a.rotation_deg;
    record.confidence = proposal.confidence;
    parse.push_back(record);
  }
  return parse;
}

}  // namespace voxproto
