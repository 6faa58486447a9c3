#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxproto/rng.hpp"
#include "voxproto/types.hpp"

namespace voxproto {

// Procedural object template: binary occupancy with a per-voxel RGB
// signature inside a 12^3 grid. Accent voxels are placed asymmetrically so
// every category breaks vertical-axis rotational symmetry in feature space.
struct ShapeCategory {
  int id = 0;
  std::string name;
  static constexpr int kDim = 12;
  std::vector<std::uint8_t> occupancy;  // 12^3, z-major like VoxelGrid
  std::vector<float> rgb;               // 12^3 * 3

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * kDim + y) * kDim + x;
  }
  bool occupied(int x, int y, int z) const { return occupancy[index(x, y, z)] != 0; }
};

const std::vector<ShapeCategory>& shape_library();

struct ObjectGT {
  int category = 0;
  Box3D box;
  double yaw_deg = 0.0;
  double scale = 1.0;
};

struct SceneGT {
  std::vector<ObjectGT> objects;
  int num_views = 0;
};

struct SynthConfig {
  int num_objects_min = 1;
  int num_objects_max = 3;
  double scale_min = 0.75;
  double scale_max = 1.25;
  int num_views = 8;
  int image_size = 96;
  double color_noise = 0.02;
  double object_size = 0.24;  // world edge of the 12-voxel template at scale 1
  GridSpec grid;  // world AABB and scene voxelization
  double camera_radius = 1.3;
  double camera_height = 0.95;
  double ground_half_extent = 3.0;

  SynthConfig();
};

// The ground plane sits just below the grid floor so quantized ground depth
// points never land inside the grid.
constexpr double kGroundDrop = 0.002;

struct SynthScene {
  std::vector<PosedImage> views;
  SceneGT gt;
  // The rasterized scene voxels, kept for oracle-style tests.
  VoxelGrid scene_rgb;     // 3 channels
  OccupancyGrid scene_occ; // Occupied at object voxels, Unknown elsewhere
};

// Deterministic scene synthesis: rejection-sampled non-overlapping objects
// rasterized into the scene grid, rendered to quantized RGB-D views from a
// camera ring. Identical seeds give byte-identical images and GT.
SynthScene generate_scene(std::uint64_t seed, const SynthConfig& config);

// Projected AABB of the GT box corners, clipped to the image; each edge is
// optionally jittered by up to +-jitter_px. Objects fully behind the camera
// are skipped.
std::vector<Box2D> gt_boxes_2d(const SceneGT& gt, const PosedImage& view,
                               int view_index, double jitter_px, Rng& rng);

}  // namespace voxproto
