#include "voxproto/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "voxproto/parallel.hpp"

namespace voxproto {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (std::int64_t c : counts) t += c;
  return t;
}

// ---------------------------------------------------------------------------
// Hungarian / LIN-MATCH
// ---------------------------------------------------------------------------

std::vector<int> hungarian_min_cost(const std::vector<double>& cost, int n) {
  if (n <= 0) return {};
  if (cost.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("hungarian_min_cost: matrix must be n*n");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[static_cast<std::size_t>(i0 - 1) * n + (j - 1)] -
                           u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) assignment[p[j] - 1] = j - 1;
  return assignment;
}

double linmatch_accuracy(const ConfusionMatrix& cm) {
  if (cm.num_prototypes <= 0 || cm.num_labels <= 0 || cm.total() == 0)
    throw EmptyMatrix("linmatch_accuracy: empty confusion matrix");
  const int n = std::max(cm.num_prototypes, cm.num_labels);
  // maximize matched counts == minimize negated counts on the padded square
  std::vector<double> cost(static_cast<std::size_t>(n) * n, 0.0);
  for (int k = 0; k < cm.num_prototypes; ++k)
    for (int l = 0; l < cm.num_labels; ++l)
      cost[static_cast<std::size_t>(k) * n + l] = -static_cast<double>(cm.at(k, l));
  const std::vector<int> assignment = hungarian_min_cost(cost, n);
  std::int64_t matched = 0;
  for (int k = 0; k < cm.num_prototypes; ++k) {
    const int l = assignment[k];
    if (l >= 0 && l < cm.num_labels) matched += cm.at(k, l);
  }
  return static_cast<double>(matched) / static_cast<double>(cm.total());
}

// ---------------------------------------------------------------------------
// Retrieval
// ---------------------------------------------------------------------------

double precision_at_k(std::span<const ObjectTensor> queries,
                      std::span<const int> query_labels,
                      std::span<const ObjectTensor> pool,
                      std::span<const int> pool_labels,
                      const FeatureTransform& transform,
                      const RotationSet& rots, int k) {
  if (queries.empty() || pool.empty()) return 0.0;
  if (queries.size() != query_labels.size() || pool.size() != pool_labels.size())
    throw std::invalid_argument("precision_at_k: label count mismatch");
  const int use_k = std::min<int>(k, static_cast<int>(pool.size()));

  std::vector<RotationPlan> plans;
  for (double angle : rots.angles) plans.push_back(make_rotation_plan(angle));

  std::vector<ObjectTensor> tq(queries.size()), tp(pool.size());
  parallel_for(queries.size(), [&](std::size_t i) { tq[i] = transform.apply(queries[i]); });
  parallel_for(pool.size(), [&](std::size_t i) { tp[i] = transform.apply(pool[i]); });

  // score matrix: max-over-rotations inner product
  std::vector<double> scores(queries.size() * pool.size(),
                             -std::numeric_limits<double>::infinity());
  parallel_for(pool.size(), [&](std::size_t p) {
    for (const RotationPlan& plan : plans) {
      const ObjectTensor rotated = apply_rotation(plan, tp[p]);
      for (std::size_t q = 0; q < tq.size(); ++q) {
        const double s = dot_product(tq[q].data, rotated.data);
        double& cell = scores[q * pool.size() + p];
        if (s > cell) cell = s;
      }
    }
  });

  double acc = 0.0;
  std::vector<int> order(pool.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const double sa = scores[q * pool.size() + a];
      const double sb = scores[q * pool.size() + b];
      if (sa != sb) return sa > sb;
      return a < b;
    });
    int hits = 0;
    for (int i = 0; i < use_k; ++i)
      if (pool_labels[order[i]] == query_labels[q]) ++hits;
    acc += static_cast<double>(hits) / use_k;
  }
  return acc / static_cast<double>(queries.size());
}

// ---------------------------------------------------------------------------
// Mean average precision
// ---------------------------------------------------------------------------

double mean_ap(const std::vector<std::vector<Proposal>>& detections,
               const std::vector<std::vector<Box3D>>& gts, double iou_thresh) {
  if (detections.size() != gts.size())
    throw std::invalid_argument("mean_ap: per-scene list sizes differ");
  std::size_t n_gt = 0;
  for (const auto& g : gts) n_gt += g.size();
  std::size_t n_det = 0;
  for (const auto& d : detections) n_det += d.size();
  if (n_gt == 0) return n_det == 0 ? 1.0 : 0.0;
  if (n_det == 0) return 0.0;

  struct Det {
    double confidence;
    int scene;
    int index;
  };
  std::vector<Det> all;
  all.reserve(n_det);
  for (std::size_t s = 0; s < detections.size(); ++s)
    for (std::size_t i = 0; i < detections[s].size(); ++i)
      all.push_back({detections[s][i].confidence, static_cast<int>(s),
                     static_cast<int>(i)});
  std::stable_sort(all.begin(), all.end(), [](const Det& a, const Det& b) {
    return a.confidence > b.confidence;
  });

  std::vector<std::vector<char>> gt_used(gts.size());
  for (std::size_t s = 0; s < gts.size(); ++s) gt_used[s].assign(gts[s].size(), 0);

  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (const Det& det : all) {
    const Box3D& box = detections[det.scene][det.index].box;
    int best_gt = -1;
    double best_iou = iou_thresh;
    for (std::size_t g = 0; g < gts[det.scene].size(); ++g) {
      if (gt_used[det.scene][g]) continue;
      const double iou = iou_3d(box, gts[det.scene][g]);
      if (iou >= best_iou) {
        best_iou = iou;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0) {
      gt_used[det.scene][best_gt] = 1;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }

  // all-points interpolation: integrate the precision envelope over recall
  double ap = 0.0;
  double best_prec = 0.0;
  for (std::size_t i = precision.size(); i-- > 0;) {
    best_prec = std::max(best_prec, precision[i]);
    const double r_lo = i == 0 ? 0.0 : recall[i - 1];
    ap += (recall[i] - r_lo) * best_prec;
  }
  return ap;
}

// ---------------------------------------------------------------------------
// Few-shot propagation
// ---------------------------------------------------------------------------

std::pair<LabelMap, std::vector<int>> few_shot_propagate(
    std::span<const ObjectTensor> exemplars, std::span<const int> exemplar_labels,
    const PrototypeDictionary& dict, const RotationSet& rots,
    std::span<const Assignment> all_assignments) {
  if (exemplars.empty())
    throw std::invalid_argument("few_shot_propagate: need at least one exemplar");
  if (exemplars.size() != exemplar_labels.size())
    throw std::invalid_argument("few_shot_propagate: label count mismatch");

  // votes per (prototype, label)
  std::map<int, std::map<int, int>> votes;
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    const Assignment a = assign(exemplars[i], dict, rots);
    votes[a.prototype_id][exemplar_labels[i]] += 1;
  }

  LabelMap map;
  for (const Prototype& p : dict.prototypes) map.prototype_to_label[p.id] = kUnlabeled;
  for (const auto& [proto_id, label_votes] : votes) {
    int best_label = kUnlabeled, best_count = 0;
    for (const auto& [label, count] : label_votes) {
      // std::map iterates labels ascending, so ties keep the smaller label
      if (count > best_count) {
        best_count = count;
        best_label = label;
      }
    }
    map.prototype_to_label[proto_id] = best_label;
  }

  std::vector<int> predicted(all_assignments.size(), kUnlabeled);
  for (std::size_t i = 0; i < all_assignments.size(); ++i)
    predicted[i] = map.label_of(all_assignments[i].prototype_id);
  return {map, predicted};
}

}  // namespace voxproto
