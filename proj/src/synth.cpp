#include "voxproto/synth.hpp"

#include <algorithm>
#include <cmath>

#include "voxproto/geometry.hpp"
#include "voxproto/parallel.hpp"

namespace voxproto {

// ---------------------------------------------------------------------------
// Shape library
// ---------------------------------------------------------------------------

namespace {

constexpr int kT = ShapeCategory::kDim;

struct Rgb {
  float r, g, b;
};

ShapeCategory make_shape(int id, const std::string& name, const Rgb& base,
                         bool (*inside)(int, int, int),
                         bool (*accent)(int, int, int)) {
  ShapeCategory cat;
  cat.id = id;
  cat.name = name;
  cat.occupancy.assign(kT * kT * kT, 0);
  cat.rgb.assign(static_cast<std::size_t>(kT) * kT * kT * 3, 0.0f);
  const Rgb acc{std::clamp(0.85f * (1.0f - base.r) + 0.10f, 0.0f, 1.0f),
                std::clamp(0.85f * (1.0f - base.g) + 0.10f, 0.0f, 1.0f),
                std::clamp(0.85f * (1.0f - base.b) + 0.10f, 0.0f, 1.0f)};
  for (int z = 0; z < kT; ++z) {
    for (int y = 0; y < kT; ++y) {
      for (int x = 0; x < kT; ++x) {
        if (!inside(x, y, z)) continue;
        const std::size_t i = cat.index(x, y, z);
        cat.occupancy[i] = 1;
        const Rgb& c = accent(x, y, z) ? acc : base;
        cat.rgb[i * 3 + 0] = c.r;
        cat.rgb[i * 3 + 1] = c.g;
        cat.rgb[i * 3 + 2] = c.b;
      }
    }
  }
  return cat;
}

bool box_inside(int x, int y, int z) {
  return x >= 2 && x < 10 && y < 7 && z >= 3 && z < 9;
}
bool box_accent(int x, int, int z) { return x >= 8 && z < 6; }

bool lshape_inside(int x, int y, int z) {
  if (y >= 6) return false;
  return (x >= 2 && x < 10 && z >= 2 && z < 5) ||
         (x >= 2 && x < 5 && z >= 5 && z < 10);
}
bool lshape_accent(int x, int, int z) { return x >= 8 && z < 5; }

bool tshape_inside(int x, int y, int z) {
  if (y >= 6) return false;
  return (x >= 1 && x < 11 && z >= 2 && z < 5) ||
         (x >= 5 && x < 8 && z >= 5 && z < 10);
}
bool tshape_accent(int, int, int z) { return z >= 8; }

bool pyramid_inside(int x, int y, int z) {
  if (y < 3) return x >= 1 && x < 11 && z >= 1 && z < 11;
  if (y < 6) return x >= 3 && x < 9 && z >= 3 && z < 9;
  if (y < 8) return x >= 5 && x < 7 && z >= 5 && z < 7;
  return false;
}
bool pyramid_accent(int x, int y, int z) { return y < 3 && x >= 8 && z >= 8; }

bool cross_inside(int x, int y, int z) {
  if (y >= 5) return false;
  return (x >= 4 && x < 8 && z >= 1 && z < 11) ||
         (z >= 4 && z < 8 && x >= 1 && x < 11);
}
bool cross_accent(int x, int, int) { return x >= 9; }

bool ring_inside(int x, int y, int z) {
  if (y >= 4) return false;
  const bool outer = x >= 1 && x < 11 && z >= 1 && z < 11;
  const bool hole = x >= 4 && x < 8 && z >= 4 && z < 8;
  return outer && !hole;
}
bool ring_accent(int, int, int z) { return z <= 2; }

bool wedge_inside(int x, int y, int z) {
  if (x < 1 || x >= 11 || z < 3 || z >= 9) return false;
  return y < (x - 1);
}
bool wedge_accent(int x, int, int) { return x >= 9; }

bool tower_inside(int x, int y, int z) {
  return x >= 4 && x < 8 && y < 11 && z >= 4 && z < 8;
}
bool tower_accent(int x, int y, int) { return y >= 8 && y < 10 && x >= 6; }

}  // namespace

const std::vector<ShapeCategory>& shape_library() {
  static const std::vector<ShapeCategory> library = [] {
    std::vector<ShapeCategory> shapes;
    shapes.push_back(make_shape(0, "box", {0.90f, 0.10f, 0.10f}, box_inside, box_accent));
    shapes.push_back(make_shape(1, "lshape", {0.10f, 0.80f, 0.10f}, lshape_inside, lshape_accent));
    shapes.push_back(make_shape(2, "tshape", {0.15f, 0.25f, 0.95f}, tshape_inside, tshape_accent));
    shapes.push_back(make_shape(3, "pyramid", {0.95f, 0.90f, 0.10f}, pyramid_inside, pyramid_accent));
    shapes.push_back(make_shape(4, "cross", {0.90f, 0.15f, 0.90f}, cross_inside, cross_accent));
    shapes.push_back(make_shape(5, "ring", {0.10f, 0.85f, 0.90f}, ring_inside, ring_accent));
    shapes.push_back(make_shape(6, "wedge", {0.95f, 0.95f, 0.95f}, wedge_inside, wedge_accent));
    shapes.push_back(make_shape(7, "tower", {0.95f, 0.55f, 0.10f}, tower_inside, tower_accent));
    return shapes;
  }();
  return library;
}

// ---------------------------------------------------------------------------
// Scene construction
// ---------------------------------------------------------------------------

SynthConfig::SynthConfig() {
  grid.aabb_min = Vec3(-0.6, 0.0, -0.6);
  grid.aabb_max = Vec3(0.6, 1.2, 0.6);
  grid.resolution = {48, 48, 48};
}

namespace {

constexpr float kGroundColor[3] = {0.45f, 0.42f, 0.40f};

struct PlacedVoxel {
  int x, y, z;
  float rgb[3];
};

// World-frame vertical-axis rotation, same convention as rotate_tensor.
inline void yaw_rotate(double c, double s, double x, double z, double& ox,
                       double& oz) {
  ox = c * x + s * z;
  oz = -s * x + c * z;
}

bool rasterize_object(const ShapeCategory& shape, const GridSpec& grid,
                      double object_size, double center_x, double center_z,
                      double yaw_deg, double scale, std::vector<PlacedVoxel>& out,
                      Box3D& tight_box) {
  out.clear();
  const double sp = scale * object_size / kT;  // template voxel edge in meters
  const double rad = yaw_deg * (M_PI / 180.0);
  const double c = std::cos(rad), s = std::sin(rad);
  const double half = 0.5 * kT * sp * std::sqrt(2.0);

  const Vec3 base(center_x, grid.aabb_min.y(), center_z);
  int x0, y0, z0, x1, y1, z1;
  {
    const Vec3 lo = base - Vec3(half, 0.0, half);
    const Vec3 hi = base + Vec3(half, kT * sp, half);
    const Vec3 p = grid.pitch();
    x0 = std::max(0, static_cast<int>(std::floor((lo.x() - grid.aabb_min.x()) / p.x())));
    y0 = std::max(0, static_cast<int>(std::floor((lo.y() - grid.aabb_min.y()) / p.y())));
    z0 = std::max(0, static_cast<int>(std::floor((lo.z() - grid.aabb_min.z()) / p.z())));
    x1 = std::min(grid.w() - 1, static_cast<int>(std::ceil((hi.x() - grid.aabb_min.x()) / p.x())));
    y1 = std::min(grid.h() - 1, static_cast<int>(std::ceil((hi.y() - grid.aabb_min.y()) / p.y())));
    z1 = std::min(grid.d() - 1, static_cast<int>(std::ceil((hi.z() - grid.aabb_min.z()) / p.z())));
  }

  Vec3 vmin(1e9, 1e9, 1e9), vmax(-1e9, -1e9, -1e9);
  for (int z = z0; z <= z1; ++z) {
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec3 w = grid.voxel_center(x, y, z);
        const double lx = w.x() - base.x();
        const double ly = w.y() - base.y();
        const double lz = w.z() - base.z();
        double ux, uz;
        yaw_rotate(c, -s, lx, lz, ux, uz);  // inverse rotation
        const int ti = static_cast<int>(std::floor(ux / sp + kT / 2.0));
        const int tj = static_cast<int>(std::floor(ly / sp));
        const int tk = static_cast<int>(std::floor(uz / sp + kT / 2.0));
        if (ti < 0 || tj < 0 || tk < 0 || ti >= kT || tj >= kT || tk >= kT)
          continue;
        if (!shape.occupied(ti, tj, tk)) continue;
        const std::size_t si = shape.index(ti, tj, tk);
        PlacedVoxel pv;
        pv.x = x;
        pv.y = y;
        pv.z = z;
        pv.rgb[0] = shape.rgb[si * 3 + 0];
        pv.rgb[1] = shape.rgb[si * 3 + 1];
        pv.rgb[2] = shape.rgb[si * 3 + 2];
        out.push_back(pv);
        const Vec3 p = grid.pitch();
        const Vec3 lo = grid.aabb_min + Vec3(x * p.x(), y * p.y(), z * p.z());
        vmin = vmin.cwiseMin(lo);
        vmax = vmax.cwiseMax(lo + p);
      }
    }
  }
  if (out.empty()) return false;
  tight_box.min_corner = vmin;
  tight_box.max_corner = vmax;
  return true;
}

bool boxes_overlap(const Box3D& a, const Box3D& b) {
  return (a.min_corner.array() < b.max_corner.array()).all() &&
         (b.min_corner.array() < a.max_corner.array()).all();
}

// Amanatides-Woo traversal; dir need not be unit length, so t carries the
// caller's parametrization (camera z-depth here). Returns the entry t of the
// first Occupied voxel, or a negative value on miss.
double dda_first_hit(const VoxelGrid& rgb, const OccupancyGrid& occ,
                     const Vec3& origin, const Vec3& dir, float* out_rgb) {
  const GridSpec& spec = occ.spec;
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (origin[a] < spec.aabb_min[a] || origin[a] > spec.aabb_max[a]) return -1.0;
      continue;
    }
    double ta = (spec.aabb_min[a] - origin[a]) / dir[a];
    double tb = (spec.aabb_max[a] - origin[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return -1.0;

  const Vec3 pitch = spec.pitch();
  const double t_start = t0 + 1e-12 * std::max(1.0, t1);
  const Vec3 p = origin + t_start * dir;
  int ix[3];
  for (int a = 0; a < 3; ++a) {
    ix[a] = static_cast<int>(std::floor((p[a] - spec.aabb_min[a]) / pitch[a]));
    ix[a] = std::clamp(ix[a], 0, spec.resolution[a] - 1);
  }
  int step[3];
  double t_max[3], t_delta[3];
  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 1e-15) {
      step[a] = 1;
      t_max[a] = ((ix[a] + 1) * pitch[a] + spec.aabb_min[a] - origin[a]) / dir[a];
      t_delta[a] = pitch[a] / dir[a];
    } else if (dir[a] < -1e-15) {
      step[a] = -1;
      t_max[a] = (ix[a] * pitch[a] + spec.aabb_min[a] - origin[a]) / dir[a];
      t_delta[a] = -pitch[a] / dir[a];
    } else {
      step[a] = 0;
      t_max[a] = std::numeric_limits<double>::infinity();
      t_delta[a] = std::numeric_limits<double>::infinity();
    }
  }

  double t_enter = t0;
  while (true) {
    if (occ.at(ix[0], ix[1], ix[2]) == Occ::Occupied) {
      if (out_rgb) {
        out_rgb[0] = rgb.at(ix[0], ix[1], ix[2], 0);
        out_rgb[1] = rgb.at(ix[0], ix[1], ix[2], 1);
        out_rgb[2] = rgb.at(ix[0], ix[1], ix[2], 2);
      }
      return t_enter;
    }
    const int axis = (t_max[0] <= t_max[1] && t_max[0] <= t_max[2]) ? 0
                     : (t_max[1] <= t_max[2]) ? 1 : 2;
    t_enter = t_max[axis];
    if (t_enter > t1) return -1.0;
    ix[axis] += step[axis];
    if (ix[axis] < 0 || ix[axis] >= spec.resolution[axis]) return -1.0;
    t_max[axis] += t_delta[axis];
  }
}

}  // namespace

SynthScene generate_scene(std::uint64_t seed, const SynthConfig& config) {
  config.grid.validate();
  if (config.num_objects_min < 0 || config.num_objects_max < config.num_objects_min)
    throw std::invalid_argument("generate_scene: bad object count range");

  const auto& shapes = shape_library();
  SynthScene scene;
  scene.scene_rgb = VoxelGrid(config.grid, 3);
  scene.scene_occ = OccupancyGrid(config.grid);
  scene.gt.num_views = config.num_views;

  Rng rng = Rng::derive(seed, 0x5ce9e);
  const int n_objects = rng.uniform_int(config.num_objects_min, config.num_objects_max);

  const double pitch = config.grid.pitch().x();
  std::vector<PlacedVoxel> scratch;
  for (int obj = 0; obj < n_objects; ++obj) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const int category = static_cast<int>(rng.uniform_index(shapes.size()));
      const double scale = rng.uniform(config.scale_min, config.scale_max);
      const double yaw = rng.uniform(0.0, 360.0);
      const double margin = 0.5 * scale * config.object_size * std::sqrt(2.0) + pitch;
      const double lo_x = config.grid.aabb_min.x() + margin;
      const double hi_x = config.grid.aabb_max.x() - margin;
      const double lo_z = config.grid.aabb_min.z() + margin;
      const double hi_z = config.grid.aabb_max.z() - margin;
      if (lo_x >= hi_x || lo_z >= hi_z)
        throw PlacementFailure("generate_scene: grid too small for objects");
      const double cx = rng.uniform(lo_x, hi_x);
      const double cz = rng.uniform(lo_z, hi_z);

      Box3D box;
      if (!rasterize_object(shapes[category], config.grid, config.object_size,
                            cx, cz, yaw, scale, scratch, box))
        continue;
      bool overlaps = false;
      for (const ObjectGT& existing : scene.gt.objects)
        if (boxes_overlap(box, existing.box)) {
          overlaps = true;
          break;
        }
      if (overlaps) continue;

      for (const PlacedVoxel& pv : scratch) {
        scene.scene_occ.at(pv.x, pv.y, pv.z) = Occ::Occupied;
        for (int ch = 0; ch < 3; ++ch) {
          float v = pv.rgb[ch];
          if (config.color_noise > 0.0)
            v += static_cast<float>(rng.uniform(-config.color_noise, config.color_noise));
          scene.scene_rgb.at(pv.x, pv.y, pv.z, ch) = std::clamp(v, 0.0f, 1.0f);
        }
      }
      ObjectGT gt;
      gt.category = category;
      gt.box = box;
      gt.yaw_deg = yaw;
      gt.scale = scale;
      scene.gt.objects.push_back(gt);
      placed = true;
    }
    if (!placed)
      throw PlacementFailure("generate_scene: no non-overlapping placement found");
  }

  // Camera ring around the grid center.
  const Vec3 center = 0.5 * (config.grid.aabb_min + config.grid.aabb_max);
  const Vec3 target(center.x(),
                    config.grid.aabb_min.y() +
                        0.25 * (config.grid.aabb_max.y() - config.grid.aabb_min.y()),
                    center.z());
  const double ground_y = config.grid.aabb_min.y() - kGroundDrop;

  scene.views.resize(config.num_views);
  parallel_for(static_cast<std::size_t>(config.num_views), [&](std::size_t vi) {
    const double az = (360.0 / config.num_views) * static_cast<double>(vi) *
                      (M_PI / 180.0);
    const Vec3 eye(center.x() + config.camera_radius * std::cos(az),
                   ground_y + config.camera_height,
                   center.z() + config.camera_radius * std::sin(az));
    PosedImage view;
    view.intrinsics.fx = config.image_size;
    view.intrinsics.fy = config.image_size;
    view.intrinsics.cx = (config.image_size - 1) / 2.0;
    view.intrinsics.cy = (config.image_size - 1) / 2.0;
    view.intrinsics.width = config.image_size;
    view.intrinsics.height = config.image_size;
    view.pose = CameraPose::look_at(eye, target);

    const int wh = config.image_size;
    view.rgb.assign(static_cast<std::size_t>(wh) * wh * 3, 0.0f);
    view.depth.assign(static_cast<std::size_t>(wh) * wh, 0.0f);
    const Mat3 rt = view.pose.rotation().transpose();
    const Vec3 origin = view.pose.camera_center();

    for (int v = 0; v < wh; ++v) {
      for (int u = 0; u < wh; ++u) {
        const Vec3 dir_cam((u - view.intrinsics.cx) / view.intrinsics.fx,
                           (v - view.intrinsics.cy) / view.intrinsics.fy, 1.0);
        const Vec3 dir = rt * dir_cam;  // t equals camera z-depth
        float rgb[3] = {0.0f, 0.0f, 0.0f};
        double depth = dda_first_hit(scene.scene_rgb, scene.scene_occ, origin, dir, rgb);
        if (depth <= 0.0) {
          // ground plane at the grid floor
          if (dir.y() < -1e-12) {
            const double tg = (ground_y - origin.y()) / dir.y();
            if (tg > 1e-9) {
              const Vec3 hit = origin + tg * dir;
              if (std::abs(hit.x() - center.x()) <= config.ground_half_extent &&
                  std::abs(hit.z() - center.z()) <= config.ground_half_extent) {
                depth = tg;
                rgb[0] = kGroundColor[0];
                rgb[1] = kGroundColor[1];
                rgb[2] = kGroundColor[2];
              }
            }
          }
        }
        const std::size_t px = static_cast<std::size_t>(v) * wh + u;
        if (depth > 0.0) {
          // quantize exactly as the dataset files store it
          const double mm = std::clamp(depth * 1000.0, 0.0, 65535.0);
          view.depth[px] = static_cast<float>(std::lround(mm)) / 1000.0f;
          for (int ch = 0; ch < 3; ++ch) {
            const int q = static_cast<int>(
                std::lround(std::clamp(rgb[ch], 0.0f, 1.0f) * 255.0f));
            view.rgb[px * 3 + ch] = static_cast<float>(q) / 255.0f;
          }
        }
      }
    }
    scene.views[vi] = std::move(view);
  });

  return scene;
}

std::vector<Box2D> gt_boxes_2d(const SceneGT& gt, const PosedImage& view,
                               int view_index, double jitter_px, Rng& rng) {
  std::vector<Box2D> boxes;
  const double u_lim = view.width() - 1.0;
  const double v_lim = view.height() - 1.0;
  for (const ObjectGT& obj : gt.objects) {
    double u_min = 1e18, v_min = 1e18, u_max = -1e18, v_max = -1e18;
    int n_front = 0;
    for (int corner = 0; corner < 8; ++corner) {
      const Vec3 world((corner & 1) ? obj.box.max_corner.x() : obj.box.min_corner.x(),
                       (corner & 2) ? obj.box.max_corner.y() : obj.box.min_corner.y(),
                       (corner & 4) ? obj.box.max_corner.z() : obj.box.min_corner.z());
      const Vec3 cam = view.pose.to_camera(world);
      if (cam.z() <= 1e-9) continue;
      ++n_front;
      const double u = view.intrinsics.fx * cam.x() / cam.z() + view.intrinsics.cx;
      const double v = view.intrinsics.fy * cam.y() / cam.z() + view.intrinsics.cy;
      u_min = std::min(u_min, u);
      u_max = std::max(u_max, u);
      v_min = std::min(v_min, v);
      v_max = std::max(v_max, v);
    }
    if (n_front == 0) continue;
    if (jitter_px > 0.0) {
      u_min += rng.uniform(-jitter_px, jitter_px);
      u_max += rng.uniform(-jitter_px, jitter_px);
      v_min += rng.uniform(-jitter_px, jitter_px);
      v_max += rng.uniform(-jitter_px, jitter_px);
    }
    u_min = std::clamp(u_min, 0.0, u_lim);
    u_max = std::clamp(u_max, 0.0, u_lim);
    v_min = std::clamp(v_min, 0.0, v_lim);
    v_max = std::clamp(v_max, 0.0, v_lim);
    if (u_max - u_min < 1.0) {
      const double mid = std::clamp(0.5 * (u_min + u_max), 0.5, u_lim - 0.5);
      u_min = mid - 0.5;
      u_max = mid + 0.5;
    }
    if (v_max - v_min < 1.0) {
      const double mid = std::clamp(0.5 * (v_min + v_max), 0.5, v_lim - 0.5);
      v_min = mid - 0.5;
      v_max = mid + 0.5;
    }
    Box2D box;
    box.u_min = u_min;
    box.v_min = v_min;
    box.u_max = u_max;
    box.v_max = v_max;
    box.view_index = view_index;
    boxes.push_back(box);
  }
  return boxes;
}

}  // namespace voxproto
