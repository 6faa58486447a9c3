#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "voxproto/detect.hpp"
#include "voxproto/mine.hpp"
#include "voxproto/quantize.hpp"
#include "voxproto/synth.hpp"
#include "voxproto/types.hpp"

namespace voxproto {

// VXG1: 'VXG1', u32 w h d c, f32 aabb (min xyz, max xyz), then f32 data at
// (((z*h + y)*w + x)*c + ch). All little-endian.
void save_voxel_grid(const std::string& path, const VoxelGrid& grid);
VoxelGrid load_voxel_grid(const std::string& path);

// Occupancy rides the same container as a 1-channel grid with labels
// encoded as -1 (Free), 0 (Unknown), +1 (Occupied).
void save_occupancy_grid(const std::string& path, const OccupancyGrid& occ);
OccupancyGrid load_occupancy_grid(const std::string& path);

// PRO1: 'PRO1', u32 K, u32 c, then per prototype u32 id, u32 assigned_count,
// 16^3*c f32 values.
void save_prototypes(const std::string& path, const PrototypeDictionary& dict);
PrototypeDictionary load_prototypes(const std::string& path);

// FTR1: 'FTR1', u32 c_out, u32 c_in, f32 weights row-major, f32 bias.
void save_transform(const std::string& path, const FeatureTransform& transform);
FeatureTransform load_transform(const std::string& path);

// Scene dataset directory: view_%03d_rgb.png (8-bit RGB), view_%03d_depth.png
// (16-bit grayscale millimeters, 0 invalid), cameras.json, optional gt.json.
void save_scene_dir(const std::string& dir, const std::vector<PosedImage>& views,
                    const SceneGT* gt = nullptr);
std::vector<PosedImage> load_scene_views(const std::string& dir);
std::optional<SceneGT> load_scene_gt(const std::string& dir);

// Proposal / label JSON lines.
std::string proposal_jsonl(const LabeledProposal& p);
void save_labeled_proposals(const std::string& path,
                            const std::vector<LabeledProposal>& proposals);
std::vector<LabeledProposal> load_labeled_proposals(const std::string& path);

std::string scene_parse_json(const SceneParse& parse);
void save_scene_parse(const std::string& path, const SceneParse& parse);

// Detector metadata; template tensors are rebuilt from the prototype file
// living in the same state directory.
void save_detector_json(const std::string& path, const Detector& det);
Detector load_detector_json(const std::string& path,
                            const PrototypeDictionary& dict);

std::vector<std::string> list_scene_dirs(const std::string& dataset_dir);

}  // namespace voxproto
