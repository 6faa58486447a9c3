#include "voxproto/voxel.hpp"

#include <cmath>

namespace voxproto {

RotationSet RotationSet::with_step(double step_deg) {
  if (!(step_deg > 0.0) ||
      std::abs(std::round(360.0 / step_deg) * step_deg - 360.0) > 1e-9)
    throw std::invalid_argument("rotation set: 360 must be divisible by step");
  RotationSet set;
  set.step_deg = step_deg;
  const int n = static_cast<int>(std::round(360.0 / step_deg));
  set.angles.reserve(n);
  for (int i = 0; i < n; ++i) set.angles.push_back(i * step_deg);
  return set;
}

// ---------------------------------------------------------------------------
// Crop + resize
// ---------------------------------------------------------------------------

namespace {

// Trilinear sample of the grid at continuous index coordinates (voxel centers
// at integers); out-of-range corners read 0.
void sample_grid(const VoxelGrid& grid, double gx, double gy, double gz,
                 float* out) {
  const int w = grid.spec.w(), h = grid.spec.h(), d = grid.spec.d();
  const int c = grid.channels;
  const int x0 = static_cast<int>(std::floor(gx));
  const int y0 = static_cast<int>(std::floor(gy));
  const int z0 = static_cast<int>(std::floor(gz));
  const double fx = gx - x0, fy = gy - y0, fz = gz - z0;

  std::vector<double> acc(c, 0.0);
  for (int dz = 0; dz < 2; ++dz) {
    const int z = z0 + dz;
    if (z < 0 || z >= d) continue;
    const double wz = dz ? fz : 1.0 - fz;
    if (wz == 0.0) continue;
    for (int dy = 0; dy < 2; ++dy) {
      const int y = y0 + dy;
      if (y < 0 || y >= h) continue;
      const double wy = dy ? fy : 1.0 - fy;
      if (wy == 0.0) continue;
      for (int dx = 0; dx < 2; ++dx) {
        const int x = x0 + dx;
        if (x < 0 || x >= w) continue;
        const double wx = dx ? fx : 1.0 - fx;
        if (wx == 0.0) continue;
        const double weight = wx * wy * wz;
        const std::size_t base = grid.spec.flat_index(x, y, z) * c;
        for (int ch = 0; ch < c; ++ch) acc[ch] += weight * grid.data[base + ch];
      }
    }
  }
  for (int ch = 0; ch < c; ++ch) out[ch] = static_cast<float>(acc[ch]);
}

}  // namespace

ObjectTensor crop_resize(const VoxelGrid& grid, const Box3D& box) {
  if (!((box.max_corner.array() > box.min_corner.array()).all()))
    throw DegenerateBox("crop_resize: box has a non-positive edge");
  ObjectTensor out(grid.channels);
  const Vec3 ext = box.extent();
  const Vec3 pitch = grid.spec.pitch();
  constexpr int n = ObjectTensor::kDim;

  std::vector<float> sample(grid.channels);
  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const Vec3 world =
            box.min_corner + Vec3((x + 0.5) / n * ext.x(), (y + 0.5) / n * ext.y(),
                                  (z + 0.5) / n * ext.z());
        const Vec3 g =
            (world - grid.spec.aabb_min).cwiseQuotient(pitch) - Vec3(0.5, 0.5, 0.5);
        sample_grid(grid, g.x(), g.y(), g.z(), sample.data());
        const std::size_t base = ObjectTensor::voxel_index(x, y, z) * grid.channels;
        for (int ch = 0; ch < grid.channels; ++ch)
          out.data[base + ch] = sample[ch];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rotation about the vertical axis
// ---------------------------------------------------------------------------

namespace {

void exact_trig(double angle_deg, double& c, double& s) {
  double a = std::fmod(angle_deg, 360.0);
  if (a < 0.0) a += 360.0;
  if (a == 0.0) {
    c = 1.0;
    s = 0.0;
  } else if (a == 90.0) {
    c = 0.0;
    s = 1.0;
  } else if (a == 180.0) {
    c = -1.0;
    s = 0.0;
  } else if (a == 270.0) {
    c = 0.0;
    s = -1.0;
  } else {
    const double rad = a * (M_PI / 180.0);
    c = std::cos(rad);
    s = std::sin(rad);
  }
}

}  // namespace

RotationPlan make_rotation_plan(double angle_deg) {
  RotationPlan plan;
  plan.angle_deg = angle_deg;
  plan.taps.resize(ObjectTensor::kVoxels);
  double c, s;
  exact_trig(angle_deg, c, s);
  constexpr int n = ObjectTensor::kDim;
  constexpr double center = (n - 1) / 2.0;

  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        // inverse rotation of the output site back into the source tensor
        const double qx = x - center;
        const double qz = z - center;
        const double sx = c * qx - s * qz + center;
        const double sz = s * qx + c * qz + center;
        const double sy = y;

        RotationPlan::Tap& tap = plan.taps[ObjectTensor::voxel_index(x, y, z)];
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const int z0 = static_cast<int>(std::floor(sz));
        const double fx = sx - x0, fy = sy - y0, fz = sz - z0;

        if (fx == 0.0 && fy == 0.0 && fz == 0.0) {
          if (x0 >= 0 && x0 < n && y0 >= 0 && y0 < n && z0 >= 0 && z0 < n) {
            tap.n = 1;
            tap.idx[0] = static_cast<std::int32_t>(ObjectTensor::voxel_index(x0, y0, z0));
            tap.w[0] = 1.0;
          }
          continue;
        }
        for (int dz = 0; dz < 2; ++dz) {
          const int zz = z0 + dz;
          if (zz < 0 || zz >= n) continue;
          const double wz = dz ? fz : 1.0 - fz;
          if (wz == 0.0) continue;
          for (int dy = 0; dy < 2; ++dy) {
            const int yy = y0 + dy;
            if (yy < 0 || yy >= n) continue;
            const double wy = dy ? fy : 1.0 - fy;
            if (wy == 0.0) continue;
            for (int dx = 0; dx < 2; ++dx) {
              const int xx = x0 + dx;
              if (xx < 0 || xx >= n) continue;
              const double wx = dx ? fx : 1.0 - fx;
              if (wx == 0.0) continue;
              tap.idx[tap.n] =
                  static_cast<std::int32_t>(ObjectTensor::voxel_index(xx, yy, zz));
              tap.w[tap.n] = wx * wy * wz;
              ++tap.n;
            }
          }
        }
      }
    }
  }
  return plan;
}

ObjectTensor apply_rotation(const RotationPlan& plan, const ObjectTensor& t) {
  ObjectTensor out(t.channels);
  const int c = t.channels;
  for (int v = 0; v < ObjectTensor::kVoxels; ++v) {
    const RotationPlan::Tap& tap = plan.taps[v];
    if (tap.n == 0) continue;
    float* dst = out.data.data() + static_cast<std::size_t>(v) * c;
    if (tap.n == 1 && tap.w[0] == 1.0) {
      const float* src = t.data.data() + static_cast<std::size_t>(tap.idx[0]) * c;
      for (int ch = 0; ch < c; ++ch) dst[ch] = src[ch];
      continue;
    }
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int k = 0; k < tap.n; ++k)
        acc += tap.w[k] * t.data[static_cast<std::size_t>(tap.idx[k]) * c + ch];
      dst[ch] = static_cast<float>(acc);
    }
  }
  return out;
}

ObjectTensor rotate_tensor(const ObjectTensor& t, double angle_deg) {
  return apply_rotation(make_rotation_plan(angle_deg), t);
}

// ---------------------------------------------------------------------------
// Similarity kernels
// ---------------------------------------------------------------------------

double dot_product(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("dot_product: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine_similarity: shape mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  const double norm_a = std::sqrt(na);
  const double norm_b = std::sqrt(nb);
  if (norm_a < 1e-12 || norm_b < 1e-12) return 0.0;
  return dot / (norm_a * norm_b);
}

double cosine_similarity(const ObjectTensor& a, const ObjectTensor& b) {
  return cosine_similarity(std::span<const float>(a.data),
                           std::span<const float>(b.data));
}

double l2_distance(const ObjectTensor& a, const ObjectTensor& b) {
  if (a.channels != b.channels || a.data.size() != b.data.size())
    throw std::invalid_argument("l2_distance: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double diff = static_cast<double>(a.data[i]) - b.data[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

}  // namespace voxproto
