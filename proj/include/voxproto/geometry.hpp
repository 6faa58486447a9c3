#pragma once

#include <utility>
#include <vector>

#include "voxproto/types.hpp"

namespace voxproto {

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

// Pinhole projection of a world point. Throws BehindCamera when the
// camera-space depth is <= 1e-9.
PixelPoint project_point(const CameraIntrinsics& intrinsics,
                         const CameraPose& pose, const Vec3& world_pt);

// Inverse of project_point: pixel plus camera-space depth back to world.
Vec3 back_project(const CameraIntrinsics& intrinsics, const CameraPose& pose,
                  double u, double v, double depth);

// Free-space carving from one depth map. For each valid depth pixel the ray
// from the camera center to the back-projected point is marched at half the
// minimum voxel edge; traversed voxels become Free, the hit voxel Occupied.
// Occupied always wins over Free. Rays ending outside the grid leave only
// Free marks (clipped at the boundary).
OccupancyGrid raycast_freespace(const PosedImage& image, const GridSpec& spec);

// Lifts an RGB-D view into a world-anchored grid. Output has 4 channels:
// RGB in 0-2 and a hit mask in 3. A voxel is hit when its center projects
// inside the image onto at least one valid (depth > 0) pixel; RGB is the
// validity-masked bilinear sample at the projected location. Occupancy comes
// from raycast_freespace.
std::pair<VoxelGrid, OccupancyGrid> unproject_image(const PosedImage& image,
                                                    const GridSpec& spec);

// Multi-view fusion. Features are the hit-mask-weighted per-voxel mean, with
// the last channel acting as the weight; contributions are summed in
// ascending value order so the result is bitwise independent of view order.
// Occupancy: Occupied if any view says so, else Free if any does, else
// Unknown. Throws SpecMismatch when grids disagree on spec or channels.
std::pair<VoxelGrid, OccupancyGrid> fuse_views(
    const std::vector<std::pair<VoxelGrid, OccupancyGrid>>& views);

struct RenderedView {
  std::vector<float> rgb;        // H*W*3
  std::vector<float> occupancy;  // H*W, 1 where any Occupied voxel on the ray
  int width = 0;
  int height = 0;
};

// Ray-marches the grid to an image: RGB of the first Occupied voxel along
// each pixel ray (0 if none), and the max-over-ray occupancy indicator.
RenderedView render_view(const VoxelGrid& grid, const OccupancyGrid& occ,
                         const CameraIntrinsics& intrinsics,
                         const CameraPose& pose);

struct ViewLoss {
  double rgb_l1 = 0.0;
  double occ_logistic = 0.0;
};

// Diagnostic view-prediction losses: mean absolute RGB error plus a
// class-balanced logistic loss on occupancy logits. gt_occ holds +1/-1
// labels with 0 marking invalid pixels; class means are averaged over the
// classes that are present (0 when no valid pixel exists).
ViewLoss view_prediction_loss(const std::vector<float>& pred_rgb,
                              const std::vector<float>& pred_occ_logits,
                              const std::vector<float>& gt_rgb,
                              const std::vector<std::int8_t>& gt_occ);

// Matching-feature preparation: RGB zeroed outside Occupied voxels, and the
// last channel replaced by an occupancy indicator.
VoxelGrid occupancy_masked(const VoxelGrid& grid, const OccupancyGrid& occ);

}  // namespace voxproto
