#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "voxproto/types.hpp"

namespace voxproto {

// Crop-and-resized object feature block, fixed 16^3 spatial size. Layout
// matches VoxelGrid: data[(((z*16 + y)*16 + x)*c + ch)].
struct ObjectTensor {
  static constexpr int kDim = 16;
  static constexpr int kVoxels = kDim * kDim * kDim;

  int channels = 0;
  std::vector<float> data;

  ObjectTensor() = default;
  explicit ObjectTensor(int c) : channels(c), data(kVoxels * c, 0.0f) {}

  static std::size_t voxel_index(int x, int y, int z) {
    return (static_cast<std::size_t>(z) * kDim + y) * kDim + x;
  }
  float at(int x, int y, int z, int c) const {
    return data[voxel_index(x, y, z) * channels + c];
  }
  float& at(int x, int y, int z, int c) {
    return data[voxel_index(x, y, z) * channels + c];
  }
};

// Discrete vertical-axis rotation search grid: {0, step, ..., 360 - step}.
struct RotationSet {
  double step_deg = 10.0;
  std::vector<double> angles;

  static RotationSet with_step(double step_deg);
};

// Trilinear resample of the box interior onto the 16^3 lattice; samples
// outside the grid read 0. Throws DegenerateBox when any box edge is <= 0.
ObjectTensor crop_resize(const VoxelGrid& grid, const Box3D& box);

// Precomputed sampling for rotating about the vertical axis through the
// tensor center (7.5, 7.5, 7.5). Multiples of 90 degrees become exact
// lattice permutations (single-tap entries), so applying them is bitwise.
struct RotationPlan {
  struct Tap {
    int n = 0;  // 0 = all sources out of bounds, 1 = exact lattice hit
    std::int32_t idx[8];
    double w[8];
  };
  double angle_deg = 0.0;
  std::vector<Tap> taps;  // one per output voxel
};

RotationPlan make_rotation_plan(double angle_deg);
ObjectTensor apply_rotation(const RotationPlan& plan, const ObjectTensor& t);
ObjectTensor rotate_tensor(const ObjectTensor& t, double angle_deg);

// Flat inner product over the squared norms; 0 when either norm < 1e-12.
double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(const ObjectTensor& a, const ObjectTensor& b);

double dot_product(std::span<const float> a, std::span<const float> b);

double l2_distance(const ObjectTensor& a, const ObjectTensor& b);

}  // namespace voxproto
