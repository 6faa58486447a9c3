#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace voxproto {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct BehindCamera : std::runtime_error {
  explicit BehindCamera(const std::string& msg) : std::runtime_error(msg) {}
};
struct SpecMismatch : std::runtime_error {
  explicit SpecMismatch(const std::string& msg) : std::runtime_error(msg) {}
};
struct DegenerateBox : std::runtime_error {
  explicit DegenerateBox(const std::string& msg) : std::runtime_error(msg) {}
};
struct EmptyDictionary : std::runtime_error {
  explicit EmptyDictionary(const std::string& msg) : std::runtime_error(msg) {}
};
struct NoValidProposals : std::runtime_error {
  explicit NoValidProposals(const std::string& msg) : std::runtime_error(msg) {}
};
struct EmptyMatrix : std::runtime_error {
  explicit EmptyMatrix(const std::string& msg) : std::runtime_error(msg) {}
};
struct NoPositives : std::runtime_error {
  explicit NoPositives(const std::string& msg) : std::runtime_error(msg) {}
};
struct NoNegatives : std::runtime_error {
  explicit NoNegatives(const std::string& msg) : std::runtime_error(msg) {}
};
struct PlacementFailure : std::runtime_error {
  explicit PlacementFailure(const std::string& msg) : std::runtime_error(msg) {}
};
struct EmptyDataset : std::runtime_error {
  explicit EmptyDataset(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Cameras
// ---------------------------------------------------------------------------

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const;
};

// Rigid world-to-camera transform. Camera frame: +x right, +y down in the
// image, +z forward (so u = fx*x/z + cx, v = fy*y/z + cy).
struct CameraPose {
  Mat4 world_to_cam = Mat4::Identity();

  void validate() const;

  Mat3 rotation() const { return world_to_cam.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return world_to_cam.topRightCorner<3, 1>(); }
  Vec3 camera_center() const { return -rotation().transpose() * translation(); }
  Mat4 cam_to_world() const;
  Vec3 to_camera(const Vec3& world_pt) const {
    return rotation() * world_pt + translation();
  }
  Vec3 to_world(const Vec3& cam_pt) const {
    return rotation().transpose() * (cam_pt - translation());
  }

  static CameraPose look_at(const Vec3& eye, const Vec3& target,
                            const Vec3& world_up = Vec3(0, 1, 0));
};

// One RGB-D view. rgb is H*W*3 row-major in [0,1]; depth is H*W meters with
// 0 marking invalid pixels.
struct PosedImage {
  std::vector<float> rgb;
  std::vector<float> depth;
  CameraIntrinsics intrinsics;
  CameraPose pose;

  int width() const { return intrinsics.width; }
  int height() const { return intrinsics.height; }
  float rgb_at(int v, int u, int c) const {
    return rgb[(static_cast<std::size_t>(v) * intrinsics.width + u) * 3 + c];
  }
  float& rgb_at(int v, int u, int c) {
    return rgb[(static_cast<std::size_t>(v) * intrinsics.width + u) * 3 + c];
  }
  float depth_at(int v, int u) const {
    return depth[static_cast<std::size_t>(v) * intrinsics.width + u];
  }
  float& depth_at(int v, int u) {
    return depth[static_cast<std::size_t>(v) * intrinsics.width + u];
  }

  void validate() const;
};

// ---------------------------------------------------------------------------
// World-anchored grids
// ---------------------------------------------------------------------------

struct GridSpec {
  Vec3 aabb_min = Vec3::Zero();
  Vec3 aabb_max = Vec3::Zero();
  std::array<int, 3> resolution = {0, 0, 0};  // (w, h, d)

  void validate() const;

  int w() const { return resolution[0]; }
  int h() const { return resolution[1]; }
  int d() const { return resolution[2]; }
  std::size_t num_voxels() const {
    return static_cast<std::size_t>(w()) * h() * d();
  }
  Vec3 pitch() const {
    return (aabb_max - aabb_min).cwiseQuotient(
        Vec3(resolution[0], resolution[1], resolution[2]));
  }
  Vec3 voxel_center(int x, int y, int z) const {
    const Vec3 p = pitch();
    return aabb_min + Vec3((x + 0.5) * p.x(), (y + 0.5) * p.y(), (z + 0.5) * p.z());
  }
  // Voxel index containing a world point, or false if outside the AABB.
  bool voxel_of(const Vec3& world_pt, int& x, int& y, int& z) const;

  std::size_t flat_index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * h() + y) * w() + x;
  }

  bool operator==(const GridSpec& o) const;
  bool operator!=(const GridSpec& o) const { return !(*this == o); }
};

// Dense w*h*d*c feature grid; layout matches the VXG1 file format:
// data[(((z*h + y)*w + x)*c + ch)].
struct VoxelGrid {
  GridSpec spec;
  int channels = 0;
  std::vector<float> data;

  VoxelGrid() = default;
  VoxelGrid(const GridSpec& s, int c)
      : spec(s), channels(c), data(s.num_voxels() * c, 0.0f) {}

  float at(int x, int y, int z, int c) const {
    return data[spec.flat_index(x, y, z) * channels + c];
  }
  float& at(int x, int y, int z, int c) {
    return data[spec.flat_index(x, y, z) * channels + c];
  }
};

enum class Occ : std::uint8_t { Free = 0, Occupied = 1, Unknown = 2 };

struct OccupancyGrid {
  GridSpec spec;
  std::vector<Occ> labels;

  OccupancyGrid() = default;
  explicit OccupancyGrid(const GridSpec& s)
      : spec(s), labels(s.num_voxels(), Occ::Unknown) {}

  Occ at(int x, int y, int z) const { return labels[spec.flat_index(x, y, z)]; }
  Occ& at(int x, int y, int z) { return labels[spec.flat_index(x, y, z)]; }
};

// ---------------------------------------------------------------------------
// Boxes
// ---------------------------------------------------------------------------

struct Box3D {
  Vec3 min_corner = Vec3::Zero();
  Vec3 max_corner = Vec3::Zero();

  Vec3 extent() const { return max_corner - min_corner; }
  Vec3 center() const { return 0.5 * (min_corner + max_corner); }
  double volume() const {
    const Vec3 e = extent();
    return e.x() * e.y() * e.z();
  }
  bool valid() const {
    return (max_corner.array() > min_corner.array()).all();
  }
};

struct Box2D {
  double u_min = 0.0;
  double v_min = 0.0;
  double u_max = 0.0;
  double v_max = 0.0;
  int view_index = 0;
};

}  // namespace voxproto
