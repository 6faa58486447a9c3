#include "voxproto/detect.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "voxproto/geometry.hpp"
#include "voxproto/parallel.hpp"
#include "voxproto/quantize.hpp"

namespace voxproto {

double iou_3d(const Box3D& a, const Box3D& b) {
  const Vec3 lo = a.min_corner.cwiseMax(b.min_corner);
  const Vec3 hi = a.max_corner.cwiseMin(b.max_corner);
  if (!((hi.array() > lo.array()).all())) return 0.0;
  const double inter = (hi - lo).prod();
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// ---------------------------------------------------------------------------
// Triangulation
// ---------------------------------------------------------------------------

std::vector<Box3D> triangulate_boxes(const std::vector<PosedImage>& views,
                                     const std::vector<Box2D>& boxes2d,
                                     const GridSpec& spec, int min_views,
                                     int min_voxels) {
  if (boxes2d.empty() || views.empty()) return {};
  std::vector<std::vector<const Box2D*>> per_view(views.size());
  for (const Box2D& box : boxes2d) {
    if (box.view_index < 0 || box.view_index >= static_cast<int>(views.size()))
      throw std::invalid_argument("triangulate_boxes: box view index out of range");
    per_view[box.view_index].push_back(&box);
  }

  // Free-space carving per view, used to veto votes for carved voxels.
  std::vector<OccupancyGrid> carved(views.size());
  parallel_for(views.size(), [&](std::size_t v) {
    carved[v] = raycast_freespace(views[v], spec);
  });

  const std::size_t n = spec.num_voxels();
  std::vector<std::uint16_t> votes(n, 0);
  const int w = spec.w(), h = spec.h(), d = spec.d();

  parallel_for(static_cast<std::size_t>(d), [&](std::size_t zi) {
    const int z = static_cast<int>(zi);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Vec3 center = spec.voxel_center(x, y, z);
        const std::size_t idx = spec.flat_index(x, y, z);
        int count = 0;
        for (std::size_t v = 0; v < views.size(); ++v) {
          if (per_view[v].empty()) continue;
          if (carved[v].labels[idx] == Occ::Free) continue;
          const Vec3 cam = views[v].pose.to_camera(center);
          if (cam.z() <= 1e-9) continue;
          const double u = views[v].intrinsics.fx * cam.x() / cam.z() +
                           views[v].intrinsics.cx;
          const double vv = views[v].intrinsics.fy * cam.y() / cam.z() +
                            views[v].intrinsics.cy;
          for (const Box2D* box : per_view[v]) {
            if (u >= box->u_min && u <= box->u_max && vv >= box->v_min &&
                vv <= box->v_max) {
              ++count;
              break;
            }
          }
        }
        votes[idx] = static_cast<std::uint16_t>(count);
      }
    }
  });

  // 26-connected components over the voted mask.
  std::vector<std::int32_t> component(n, -1);
  std::vector<Box3D> out;
  std::deque<std::array<int, 3>> queue;
  std::int32_t next_component = 0;
  for (int z = 0; z < d; ++z) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t idx = spec.flat_index(x, y, z);
        if (votes[idx] < min_views || component[idx] >= 0) continue;
        const std::int32_t id = next_component++;
        component[idx] = id;
        queue.push_back({x, y, z});
        int lo[3] = {x, y, z}, hi[3] = {x, y, z};
        std::size_t size = 0;
        while (!queue.empty()) {
          const auto [cx, cy, cz] = queue.front();
          queue.pop_front();
          ++size;
          lo[0] = std::min(lo[0], cx); hi[0] = std::max(hi[0], cx);
          lo[1] = std::min(lo[1], cy); hi[1] = std::max(hi[1], cy);
          lo[2] = std::min(lo[2], cz); hi[2] = std::max(hi[2], cz);
          for (int dz = -1; dz <= 1; ++dz) {
            for (int dy = -1; dy <= 1; ++dy) {
              for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0 && dz == 0) continue;
                const int nx = cx + dx, ny = cy + dy, nz = cz + dz;
                if (nx < 0 || ny < 0 || nz < 0 || nx >= w || ny >= h || nz >= d)
                  continue;
                const std::size_t nidx = spec.flat_index(nx, ny, nz);
                if (votes[nidx] < min_views || component[nidx] >= 0) continue;
                component[nidx] = id;
                queue.push_back({nx, ny, nz});
              }
            }
          }
        }
        if (size < static_cast<std::size_t>(min_voxels)) continue;
        const Vec3 pitch = spec.pitch();
        Box3D box;
        box.min_corner = spec.aabb_min +
                         Vec3(lo[0] * pitch.x(), lo[1] * pitch.y(), lo[2] * pitch.z());
        box.max_corner = spec.aabb_min + Vec3((hi[0] + 1) * pitch.x(),
                                              (hi[1] + 1) * pitch.y(),
                                              (hi[2] + 1) * pitch.z());
        out.push_back(box);
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Box3D& a, const Box3D& b) {
    return std::lexicographical_compare(a.min_corner.data(), a.min_corner.data() + 3,
                                        b.min_corner.data(), b.min_corner.data() + 3);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Center-surround saliency
// ---------------------------------------------------------------------------

double center_surround_sim(const VoxelGrid& grid, const Box3D& box) {
  const ObjectTensor center = crop_resize(grid, box);
  const Vec3 ext = box.extent();
  double acc = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    for (int sign = -1; sign <= 1; sign += 2) {
      Vec3 shift = Vec3::Zero();
      shift[axis] = sign * ext[axis];
      Box3D neighbor{box.min_corner + shift, box.max_corner + shift};
      neighbor.min_corner = neighbor.min_corner.cwiseMax(grid.spec.aabb_min);
      neighbor.max_corner = neighbor.max_corner.cwiseMin(grid.spec.aabb_max);
      if (!((neighbor.max_corner.array() > neighbor.min_corner.array()).all()))
        continue;  // fully outside after clipping: contributes 0
      acc += cosine_similarity(center, crop_resize(grid, neighbor));
    }
  }
  return acc / 6.0;
}

// ---------------------------------------------------------------------------
// Pseudo-labeling
// ---------------------------------------------------------------------------

namespace {

// Best cosine over (prototype, rotation), ties toward smaller prototype id
// then smaller angle. Rotated crops are materialized once per angle.
void best_prototype_match(const ObjectTensor& crop,
                          const PrototypeDictionary& dict,
                          const std::vector<RotationPlan>& plans,
                          double& best_sim, int& best_id) {
  std::vector<ObjectTensor> rotated;
  rotated.reserve(plans.size());
  for (const RotationPlan& plan : plans) rotated.push_back(apply_rotation(plan, crop));
  best_sim = -2.0;
  best_id = -1;
  for (const Prototype& proto : dict.prototypes) {
    for (std::size_t r = 0; r < rotated.size(); ++r) {
      const double sim = cosine_similarity(proto.tensor, rotated[r]);
      if (sim > best_sim) {
        best_sim = sim;
        best_id = proto.id;
      }
    }
  }
}

}  // namespace

std::vector<LabeledProposal> label_proposals(std::span<const Proposal> proposals,
                                             const VoxelGrid& grid,
                                             const PrototypeDictionary& dict,
                                             const RotationSet& rots,
                                             double valid_thresh,
                                             double invalid_thresh) {
  if (dict.empty())
    throw EmptyDictionary("label_proposals: prototype dictionary is empty");
  std::vector<RotationPlan> plans;
  plans.reserve(rots.angles.size());
  for (double angle : rots.angles) plans.push_back(make_rotation_plan(angle));

  std::vector<LabeledProposal> out(proposals.size());
  parallel_for(proposals.size(), [&](std::size_t i) {
    LabeledProposal lp;
    lp.proposal = proposals[i];
    const ObjectTensor crop = crop_resize(grid, proposals[i].box);
    best_prototype_match(crop, dict, plans, lp.prototype_sim, lp.matched_prototype);
    lp.surround_sim = center_surround_sim(grid, proposals[i].box);
    if (lp.prototype_sim >= valid_thresh) {
      lp.label = ProposalLabel::Valid;
    } else if (lp.surround_sim > invalid_thresh) {
      lp.label = ProposalLabel::Invalid;
    } else {
      lp.label = ProposalLabel::Unlabeled;
    }
    out[i] = std::move(lp);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Detector refit
// ---------------------------------------------------------------------------

ObjectTensor normalized_template(const ObjectTensor& t) {
  ObjectTensor out = t;
  const double norm = std::sqrt(dot_product(out.data, out.data));
  if (norm > 1e-12)
    for (float& v : out.data) v = static_cast<float>(v / norm);
  return out;
}

namespace {

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

Detector refit_detector(std::span<const LabeledProposal> labeled,
                        const PrototypeDictionary& dict,
                        const DetectorConfig& config) {
  std::vector<int> ids;
  std::vector<double> ext[3];
  for (const LabeledProposal& lp : labeled) {
    if (lp.label != ProposalLabel::Valid) continue;
    if (!dict.find(lp.matched_prototype)) continue;
    ids.push_back(lp.matched_prototype);
    const Vec3 e = lp.proposal.box.extent();
    for (int a = 0; a < 3; ++a) ext[a].push_back(e[a]);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.empty())
    throw NoValidProposals("refit_detector: no valid proposals to train from");

  Detector det;
  det.confidence_threshold = config.confidence_threshold;
  det.stride_voxels = config.stride_voxels;
  if ((config.box_size.array() > 0.0).all()) {
    det.box_size = config.box_size;
  } else {
    det.box_size = Vec3(median_of(ext[0]), median_of(ext[1]), median_of(ext[2]));
  }
  for (int id : ids) {
    det.templates.push_back(normalized_template(dict.find(id)->tensor));
    det.template_prototype_ids.push_back(id);
  }
  return det;
}

// ---------------------------------------------------------------------------
// Sliding-window detection
// ---------------------------------------------------------------------------

namespace {

// 3D summed-area table over the any-channel-nonzero flag; lets empty windows
// shortcut to a zero score, which equals the brute-force cosine of an
// all-zero crop.
struct NonzeroIntegral {
  int w, h, d;
  std::vector<std::int64_t> table;  // (w+1)*(h+1)*(d+1)

  explicit NonzeroIntegral(const VoxelGrid& grid)
      : w(grid.spec.w()), h(grid.spec.h()), d(grid.spec.d()),
        table(static_cast<std::size_t>(w + 1) * (h + 1) * (d + 1), 0) {
    for (int z = 0; z < d; ++z) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          bool nonzero = false;
          const std::size_t base = grid.spec.flat_index(x, y, z) * grid.channels;
          for (int c = 0; c < grid.channels && !nonzero; ++c)
            nonzero = grid.data[base + c] != 0.0f;
          at(x + 1, y + 1, z + 1) = (nonzero ? 1 : 0) + at(x, y + 1, z + 1) +
                                    at(x + 1, y, z + 1) + at(x + 1, y + 1, z) -
                                    at(x, y, z + 1) - at(x, y + 1, z) -
                                    at(x + 1, y, z) + at(x, y, z);
        }
      }
    }
  }

  std::int64_t& at(int x, int y, int z) {
    return table[(static_cast<std::size_t>(z) * (h + 1) + y) * (w + 1) + x];
  }
  std::int64_t at(int x, int y, int z) const {
    return table[(static_cast<std::size_t>(z) * (h + 1) + y) * (w + 1) + x];
  }

  // Count of nonzero voxels in the inclusive voxel-index range.
  std::int64_t count(int x0, int y0, int z0, int x1, int y1, int z1) const {
    x0 = std::max(x0, 0); y0 = std::max(y0, 0); z0 = std::max(z0, 0);
    x1 = std::min(x1, w - 1); y1 = std::min(y1, h - 1); z1 = std::min(z1, d - 1);
    if (x0 > x1 || y0 > y1 || z0 > z1) return 0;
    return at(x1 + 1, y1 + 1, z1 + 1) - at(x0, y1 + 1, z1 + 1) -
           at(x1 + 1, y0, z1 + 1) - at(x1 + 1, y1 + 1, z0) + at(x0, y0, z1 + 1) +
           at(x0, y1 + 1, z0) + at(x1 + 1, y0, z0) - at(x0, y0, z0);
  }
};

}  // namespace

std::vector<std::pair<Box3D, double>> detect_score_map(const VoxelGrid& grid,
                                                       const Detector& det,
                                                       const RotationSet& rots) {
  const Vec3 pitch = grid.spec.pitch();
  const Vec3 span = grid.spec.aabb_max - grid.spec.aabb_min;
  int counts[3];
  for (int a = 0; a < 3; ++a) {
    if (det.box_size[a] <= 0.0)
      throw std::invalid_argument("detect: detector box_size must be positive");
    if (det.box_size[a] > span[a] + 1e-9) {
      counts[a] = 0;
    } else {
      counts[a] = static_cast<int>(std::floor((span[a] - det.box_size[a]) /
                                              (det.stride_voxels * pitch[a]) + 1e-9)) + 1;
    }
  }
  if (counts[0] <= 0 || counts[1] <= 0 || counts[2] <= 0) return {};

  std::vector<RotationPlan> plans;
  for (double angle : rots.angles) plans.push_back(make_rotation_plan(angle));
  const NonzeroIntegral integral(grid);

  const std::size_t total = static_cast<std::size_t>(counts[0]) * counts[1] * counts[2];
  std::vector<std::pair<Box3D, double>> windows(total);

  parallel_for(total, [&](std::size_t wi) {
    const int ix = static_cast<int>(wi % counts[0]);
    const int iy = static_cast<int>((wi / counts[0]) % counts[1]);
    const int iz = static_cast<int>(wi / (static_cast<std::size_t>(counts[0]) * counts[1]));
    Box3D box;
    box.min_corner = grid.spec.aabb_min +
                     Vec3(ix * det.stride_voxels * pitch.x(),
                          iy * det.stride_voxels * pitch.y(),
                          iz * det.stride_voxels * pitch.z());
    box.max_corner = box.min_corner + det.box_size;

    double score = 0.0;
    // crop reads at most one voxel beyond the box faces
    const int vx0 = static_cast<int>(std::floor((box.min_corner.x() - grid.spec.aabb_min.x()) / pitch.x())) - 1;
    const int vy0 = static_cast<int>(std::floor((box.min_corner.y() - grid.spec.aabb_min.y()) / pitch.y())) - 1;
    const int vz0 = static_cast<int>(std::floor((box.min_corner.z() - grid.spec.aabb_min.z()) / pitch.z())) - 1;
    const int vx1 = static_cast<int>(std::ceil((box.max_corner.x() - grid.spec.aabb_min.x()) / pitch.x())) + 1;
    const int vy1 = static_cast<int>(std::ceil((box.max_corner.y() - grid.spec.aabb_min.y()) / pitch.y())) + 1;
    const int vz1 = static_cast<int>(std::ceil((box.max_corner.z() - grid.spec.aabb_min.z()) / pitch.z())) + 1;
    if (integral.count(vx0, vy0, vz0, vx1, vy1, vz1) > 0) {
      const ObjectTensor crop = crop_resize(grid, box);
      for (const RotationPlan& plan : plans) {
        const ObjectTensor rotated = apply_rotation(plan, crop);
        for (const ObjectTensor& tmpl : det.templates)
          score = std::max(score, cosine_similarity(tmpl, rotated));
      }
    }
    windows[wi] = {box, score};
  });
  return windows;
}

std::vector<Proposal> detect_objects(const VoxelGrid& grid, const Detector& det,
                                     const RotationSet& rots, double nms_iou) {
  if (det.empty())
    throw std::invalid_argument("detect: detector has no templates");
  const auto windows = detect_score_map(grid, det, rots);
  std::vector<Proposal> raw;
  for (const auto& [box, score] : windows) {
    if (score < det.confidence_threshold) continue;
    raw.push_back({box, std::clamp(score, 0.0, 1.0)});
  }
  return nms_3d(raw, nms_iou);
}

std::vector<Proposal> nms_3d(std::span<const Proposal> proposals,
                             double iou_thresh) {
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (proposals[a].confidence != proposals[b].confidence)
      return proposals[a].confidence > proposals[b].confidence;
    return std::lexicographical_compare(
        proposals[a].box.min_corner.data(), proposals[a].box.min_corner.data() + 3,
        proposals[b].box.min_corner.data(), proposals[b].box.min_corner.data() + 3);
  });
  std::vector<Proposal> kept;
  for (std::size_t idx : order) {
    bool suppressed = false;
    for (const Proposal& k : kept) {
      if (iou_3d(proposals[idx].box, k.box) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(proposals[idx]);
  }
  return kept;
}

}  // namespace voxproto
