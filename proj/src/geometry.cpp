#include "voxproto/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "voxproto/parallel.hpp"

namespace voxproto {

namespace {
constexpr double kMinDepth = 1e-9;
}

// ---------------------------------------------------------------------------
// Type validation
// ---------------------------------------------------------------------------

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0))
    throw std::invalid_argument("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw std::invalid_argument("intrinsics: principal point outside image");
}

void CameraPose::validate() const {
  const Mat3 r = rotation();
  if (((r.transpose() * r) - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
    throw std::invalid_argument("pose: rotation block is not orthonormal");
  if (std::abs(r.determinant() - 1.0) > 1e-6)
    throw std::invalid_argument("pose: rotation determinant is not +1");
  const Eigen::RowVector4d last = world_to_cam.row(3);
  if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("pose: last row must be (0,0,0,1)");
}

Mat4 CameraPose::cam_to_world() const {
  Mat4 inv = Mat4::Identity();
  const Mat3 rt = rotation().transpose();
  inv.topLeftCorner<3, 3>() = rt;
  inv.topRightCorner<3, 1>() = -rt * translation();
  return inv;
}

CameraPose CameraPose::look_at(const Vec3& eye, const Vec3& target,
                               const Vec3& world_up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 down = -(world_up - world_up.dot(forward) * forward);
  if (down.norm() < 1e-9)
    throw std::invalid_argument("look_at: view direction parallel to up");
  down.normalize();
  const Vec3 right = down.cross(forward);
  CameraPose pose;
  pose.world_to_cam.row(0).head<3>() = right.transpose();
  pose.world_to_cam.row(1).head<3>() = down.transpose();
  pose.world_to_cam.row(2).head<3>() = forward.transpose();
  pose.world_to_cam.topRightCorner<3, 1>() =
      -pose.world_to_cam.topLeftCorner<3, 3>() * eye;
  return pose;
}

void PosedImage::validate() const {
  intrinsics.validate();
  pose.validate();
  const std::size_t n = static_cast<std::size_t>(width()) * height();
  if (rgb.size() != n * 3 || depth.size() != n)
    throw std::invalid_argument("posed image: buffer sizes mismatch intrinsics");
  for (float v : rgb)
    if (!(v >= 0.0f && v <= 1.0f))
      throw std::invalid_argument("posed image: rgb outside [0,1]");
  for (float d : depth)
    if (!(d >= 0.0f) || !std::isfinite(d))
      throw std::invalid_argument("posed image: depth must be finite and >= 0");
}

void GridSpec::validate() const {
  if (!((aabb_max.array() > aabb_min.array()).all()))
    throw std::invalid_argument("grid spec: aabb_max must exceed aabb_min");
  for (int r : resolution)
    if (r < 2) throw std::invalid_argument("grid spec: resolution must be >= 2");
}

bool GridSpec::voxel_of(const Vec3& world_pt, int& x, int& y, int& z) const {
  const Vec3 p = pitch();
  const Vec3 rel = (world_pt - aabb_min).cwiseQuotient(p);
  const int ix = static_cast<int>(std::floor(rel.x()));
  const int iy = static_cast<int>(std::floor(rel.y()));
  const int iz = static_cast<int>(std::floor(rel.z()));
  if (ix < 0 || iy < 0 || iz < 0 || ix >= w() || iy >= h() || iz >= d())
    return false;
  x = ix;
  y = iy;
  z = iz;
  return true;
}

bool GridSpec::operator==(const GridSpec& o) const {
  return aabb_min == o.aabb_min && aabb_max == o.aabb_max &&
         resolution == o.resolution;
}

// ---------------------------------------------------------------------------
// Projection
// ---------------------------------------------------------------------------

PixelPoint project_point(const CameraIntrinsics& intrinsics,
                         const CameraPose& pose, const Vec3& world_pt) {
  const Vec3 cam = pose.to_camera(world_pt);
  if (cam.z() <= kMinDepth)
    throw BehindCamera("project_point: point at or behind the camera plane");
  PixelPoint out;
  out.u = intrinsics.fx * cam.x() / cam.z() + intrinsics.cx;
  out.v = intrinsics.fy * cam.y() / cam.z() + intrinsics.cy;
  out.depth = cam.z();
  return out;
}

Vec3 back_project(const CameraIntrinsics& intrinsics, const CameraPose& pose,
                  double u, double v, double depth) {
  const Vec3 cam((u - intrinsics.cx) / intrinsics.fx * depth,
                 (v - intrinsics.cy) / intrinsics.fy * depth, depth);
  return pose.to_world(cam);
}

// ---------------------------------------------------------------------------
// Raycast free-space carving
// ---------------------------------------------------------------------------

OccupancyGrid raycast_freespace(const PosedImage& image, const GridSpec& spec) {
  OccupancyGrid occ(spec);
  const Vec3 origin = image.pose.camera_center();
  const Vec3 pitch = spec.pitch();
  const double step = 0.5 * pitch.minCoeff();
  const int w = image.width(), h = image.height();

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double depth = image.depth_at(v, u);
      if (!(depth > 0.0)) continue;
      const Vec3 hit = back_project(image.intrinsics, image.pose, u, v, depth);
      const Vec3 delta = hit - origin;
      const double dist = delta.norm();
      if (dist < kMinDepth) continue;
      const Vec3 dir = delta / dist;

      int hx = -1, hy = -1, hz = -1;
      const bool hit_in_grid = spec.voxel_of(hit, hx, hy, hz);

      for (double t = 0.5 * step; t < dist; t += step) {
        int x, y, z;
        if (!spec.voxel_of(origin + t * dir, x, y, z)) continue;
        if (hit_in_grid && x == hx && y == hy && z == hz) continue;
        Occ& cell = occ.at(x, y, z);
        if (cell != Occ::Occupied) cell = Occ::Free;
      }
      if (hit_in_grid) occ.at(hx, hy, hz) = Occ::Occupied;
    }
  }
  return occ;
}

// ---------------------------------------------------------------------------
// Unprojection
// ---------------------------------------------------------------------------

namespace {

// Bilinear RGB sample restricted to valid (depth > 0) pixels; weights are
// renormalized over the valid neighbors. Returns false when no valid
// neighbor carries weight.
bool sample_rgb_valid(const PosedImage& image, double u, double v,
                      float out[3]) {
  const int w = image.width(), h = image.height();
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const double fx = u - x0;
  const double fy = v - y0;
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const int xs[2] = {x0, x1};
  const int ys[2] = {y0, y1};
  const double wx[2] = {1.0 - fx, fx};
  const double wy[2] = {1.0 - fy, fy};

  double acc[3] = {0.0, 0.0, 0.0};
  double wsum = 0.0;
  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < 2; ++i) {
      const double weight = wx[i] * wy[j];
      if (weight <= 0.0) continue;
      if (!(image.depth_at(ys[j], xs[i]) > 0.0f)) continue;
      wsum += weight;
      for (int c = 0; c < 3; ++c)
        acc[c] += weight * image.rgb_at(ys[j], xs[i], c);
    }
  }
  if (wsum <= 0.0) return false;
  for (int c = 0; c < 3; ++c) out[c] = static_cast<float>(acc[c] / wsum);
  return true;
}

}  // namespace

std::pair<VoxelGrid, OccupancyGrid> unproject_image(const PosedImage& image,
                                                    const GridSpec& spec) {
  VoxelGrid grid(spec, 4);
  const int w = spec.w(), h = spec.h(), d = spec.d();
  const double u_max = image.width() - 1.0;
  const double v_max = image.height() - 1.0;

  parallel_for(static_cast<std::size_t>(d), [&](std::size_t zi) {
    const int z = static_cast<int>(zi);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Vec3 center = spec.voxel_center(x, y, z);
        const Vec3 cam = image.pose.to_camera(center);
        if (cam.z() <= kMinDepth) continue;
        const double u = image.intrinsics.fx * cam.x() / cam.z() + image.intrinsics.cx;
        const double v = image.intrinsics.fy * cam.y() / cam.z() + image.intrinsics.cy;
        if (u < 0.0 || u > u_max || v < 0.0 || v > v_max) continue;
        float rgb[3];
        if (!sample_rgb_valid(image, u, v, rgb)) continue;
        grid.at(x, y, z, 0) = rgb[0];
        grid.at(x, y, z, 1) = rgb[1];
        grid.at(x, y, z, 2) = rgb[2];
        grid.at(x, y, z, 3) = 1.0f;
      }
    }
  });

  return {std::move(grid), raycast_freespace(image, spec)};
}

// ---------------------------------------------------------------------------
// Fusion
// ---------------------------------------------------------------------------

namespace {

// Sum in ascending value order: canonical under any permutation of the
// contributing views.
double ordered_sum(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc;
}

}  // namespace

std::pair<VoxelGrid, OccupancyGrid> fuse_views(
    const std::vector<std::pair<VoxelGrid, OccupancyGrid>>& views) {
  if (views.empty()) throw SpecMismatch("fuse_views: no input grids");
  const GridSpec& spec = views.front().first.spec;
  const int channels = views.front().first.channels;
  for (const auto& [g, o] : views) {
    if (g.spec != spec || o.spec != spec || g.channels != channels)
      throw SpecMismatch("fuse_views: grid specs or channels differ");
  }

  VoxelGrid fused(spec, channels);
  OccupancyGrid occ(spec);
  const std::size_t n = spec.num_voxels();
  const int weight_ch = channels - 1;

  parallel_for(n, [&](std::size_t i) {
    std::vector<double> weights;
    std::vector<double> contrib;
    weights.reserve(views.size());
    for (const auto& [g, o] : views) {
      const double wv = g.data[i * channels + weight_ch];
      if (wv != 0.0) weights.push_back(wv);
    }
    if (!weights.empty()) {
      std::vector<double> wcopy = weights;
      const double wsum = ordered_sum(wcopy);
      if (wsum > 0.0) {
        for (int c = 0; c < channels; ++c) {
          contrib.clear();
          for (const auto& [g, o] : views) {
            const double wv = g.data[i * channels + weight_ch];
            if (wv != 0.0) contrib.push_back(wv * g.data[i * channels + c]);
          }
          fused.data[i * channels + c] =
              static_cast<float>(ordered_sum(contrib) / wsum);
        }
      }
    }

    Occ label = Occ::Unknown;
    for (const auto& [g, o] : views) {
      if (o.labels[i] == Occ::Occupied) {
        label = Occ::Occupied;
        break;
      }
      if (o.labels[i] == Occ::Free) label = Occ::Free;
    }
    occ.labels[i] = label;
  });

  return {std::move(fused), std::move(occ)};
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace {

// Slab test against the grid AABB; returns false when the ray misses.
bool ray_aabb(const Vec3& origin, const Vec3& dir, const GridSpec& spec,
              double& t0, double& t1) {
  t0 = 0.0;
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (origin[a] < spec.aabb_min[a] || origin[a] > spec.aabb_max[a])
        return false;
      continue;
    }
    double ta = (spec.aabb_min[a] - origin[a]) / dir[a];
    double tb = (spec.aabb_max[a] - origin[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 <= t1;
}

}  // namespace

RenderedView render_view(const VoxelGrid& grid, const OccupancyGrid& occ,
                         const CameraIntrinsics& intrinsics,
                         const CameraPose& pose) {
  if (grid.spec != occ.spec)
    throw SpecMismatch("render_view: grid and occupancy specs differ");
  RenderedView out;
  out.width = intrinsics.width;
  out.height = intrinsics.height;
  out.rgb.assign(static_cast<std::size_t>(out.width) * out.height * 3, 0.0f);
  out.occupancy.assign(static_cast<std::size_t>(out.width) * out.height, 0.0f);

  const Vec3 origin = pose.camera_center();
  const Mat3 rt = pose.rotation().transpose();
  const double step = 0.5 * grid.spec.pitch().minCoeff();

  parallel_for(static_cast<std::size_t>(out.height), [&](std::size_t vi) {
    const int v = static_cast<int>(vi);
    for (int u = 0; u < out.width; ++u) {
      const Vec3 dir_cam((u - intrinsics.cx) / intrinsics.fx,
                         (v - intrinsics.cy) / intrinsics.fy, 1.0);
      const Vec3 dir = (rt * dir_cam).normalized();
      double t0, t1;
      if (!ray_aabb(origin, dir, grid.spec, t0, t1)) continue;
      const std::size_t px = static_cast<std::size_t>(v) * out.width + u;
      bool got_rgb = false;
      for (double t = t0 + 0.5 * step; t < t1; t += step) {
        int x, y, z;
        if (!grid.spec.voxel_of(origin + t * dir, x, y, z)) continue;
        if (occ.at(x, y, z) != Occ::Occupied) continue;
        out.occupancy[px] = 1.0f;
        if (!got_rgb) {
          out.rgb[px * 3 + 0] = grid.at(x, y, z, 0);
          out.rgb[px * 3 + 1] = grid.at(x, y, z, 1);
          out.rgb[px * 3 + 2] = grid.at(x, y, z, 2);
          got_rgb = true;
        }
        break;  // first Occupied voxel settles both outputs
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// View-prediction loss
// ---------------------------------------------------------------------------

namespace {

double softplus_neg(double x) {
  // log(1 + exp(-x)) without overflow
  if (x > 0.0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

}  // namespace

ViewLoss view_prediction_loss(const std::vector<float>& pred_rgb,
                              const std::vector<float>& pred_occ_logits,
                              const std::vector<float>& gt_rgb,
                              const std::vector<std::int8_t>& gt_occ) {
  if (pred_rgb.size() != gt_rgb.size() ||
      pred_occ_logits.size() != gt_occ.size())
    throw std::invalid_argument("view_prediction_loss: size mismatch");
  ViewLoss loss;
  double l1 = 0.0;
  for (std::size_t i = 0; i < pred_rgb.size(); ++i)
    l1 += std::abs(static_cast<double>(pred_rgb[i]) - gt_rgb[i]);
  loss.rgb_l1 = pred_rgb.empty() ? 0.0 : l1 / pred_rgb.size();

  double sum_pos = 0.0, sum_neg = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < gt_occ.size(); ++i) {
    if (gt_occ[i] == 0) continue;
    const double term = softplus_neg(gt_occ[i] * pred_occ_logits[i]);
    if (gt_occ[i] > 0) {
      sum_pos += term;
      ++n_pos;
    } else {
      sum_neg += term;
      ++n_neg;
    }
  }
  double acc = 0.0;
  int classes = 0;
  if (n_pos > 0) {
    acc += sum_pos / n_pos;
    ++classes;
  }
  if (n_neg > 0) {
    acc += sum_neg / n_neg;
    ++classes;
  }
  loss.occ_logistic = classes > 0 ? acc / classes : 0.0;
  return loss;
}

VoxelGrid occupancy_masked(const VoxelGrid& grid, const OccupancyGrid& occ) {
  if (grid.spec != occ.spec)
    throw SpecMismatch("occupancy_masked: grid and occupancy specs differ");
  VoxelGrid out(grid.spec, grid.channels);
  const std::size_t n = grid.spec.num_voxels();
  for (std::size_t i = 0; i < n; ++i) {
    if (occ.labels[i] != Occ::Occupied) continue;
    for (int c = 0; c < grid.channels - 1; ++c)
      out.data[i * grid.channels + c] = grid.data[i * grid.channels + c];
    out.data[i * grid.channels + (grid.channels - 1)] = 1.0f;
  }
  return out;
}

}  // namespace voxproto
