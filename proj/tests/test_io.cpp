#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "voxproto/io.hpp"
#include "voxproto/rng.hpp"
#include "voxproto/synth.hpp"

using namespace voxproto;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("voxproto_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("VXG1 round trip preserves spec, channels and data") {
  const std::string dir = temp_dir("vxg");
  GridSpec spec;
  spec.aabb_min = Vec3(-0.5, 0.0, -0.25);
  spec.aabb_max = Vec3(0.5, 1.0, 0.75);
  spec.resolution = {5, 4, 3};
  VoxelGrid grid(spec, 2);
  Rng rng(1);
  for (float& v : grid.data) v = static_cast<float>(rng.uniform(-5, 5));

  save_voxel_grid(dir + "/g.vxg1", grid);
  const VoxelGrid back = load_voxel_grid(dir + "/g.vxg1");
  CHECK(back.channels == 2);
  CHECK(back.spec.resolution == spec.resolution);
  CHECK(back.spec.aabb_min.isApprox(spec.aabb_min, 1e-6));
  CHECK(back.data == grid.data);
}

TEST_CASE("VXG1 layout places (x,y,z,ch) at (((z*h + y)*w + x)*c + ch)") {
  const std::string dir = temp_dir("vxg_layout");
  GridSpec spec;
  spec.aabb_min = Vec3(0, 0, 0);
  spec.aabb_max = Vec3(1, 1, 1);
  spec.resolution = {3, 4, 5};  // w, h, d
  VoxelGrid grid(spec, 2);
  grid.at(1, 2, 3, 1) = 42.0f;
  save_voxel_grid(dir + "/g.vxg1", grid);

  const auto bytes = slurp(dir + "/g.vxg1");
  const std::size_t header = 4 + 4 * 4 + 6 * 4;
  const std::size_t offset = ((3 * 4 + 2) * 3 + 1) * 2 + 1;  // (((z*h+y)*w+x)*c+ch)
  float value;
  std::memcpy(&value, bytes.data() + header + offset * 4, 4);
  CHECK(value == 42.0f);
}

TEST_CASE("occupancy grid round trip keeps the tri-state labels") {
  const std::string dir = temp_dir("occ");
  GridSpec spec;
  spec.aabb_min = Vec3(0, 0, 0);
  spec.aabb_max = Vec3(1, 1, 1);
  spec.resolution = {4, 4, 4};
  OccupancyGrid occ(spec);
  occ.at(0, 0, 0) = Occ::Free;
  occ.at(1, 1, 1) = Occ::Occupied;
  save_occupancy_grid(dir + "/o.vxg1", occ);
  const OccupancyGrid back = load_occupancy_grid(dir + "/o.vxg1");
  CHECK(back.labels == occ.labels);
}

TEST_CASE("PRO1 round trip preserves prototypes") {
  const std::string dir = temp_dir("pro");
  PrototypeDictionary dict;
  dict.k_max = 50;
  Rng rng(2);
  for (int k = 0; k < 3; ++k) {
    Prototype p;
    p.id = k * 2;  // non-contiguous ids survive
    p.assigned_count = 5 + k;
    p.tensor = ObjectTensor(4);
    for (float& v : p.tensor.data) v = static_cast<float>(rng.uniform(-1, 1));
    dict.prototypes.push_back(std::move(p));
  }
  save_prototypes(dir + "/d.pro1", dict);
  const PrototypeDictionary back = load_prototypes(dir + "/d.pro1");
  REQUIRE(back.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(back.prototypes[k].id == dict.prototypes[k].id);
    CHECK(back.prototypes[k].assigned_count == dict.prototypes[k].assigned_count);
    CHECK(back.prototypes[k].tensor.data == dict.prototypes[k].tensor.data);
  }
}

TEST_CASE("FTR1 round trip preserves the transform") {
  const std::string dir = temp_dir("ftr");
  FeatureTransform t = FeatureTransform::identity(4);
  t.weights[3] = 0.25f;
  t.bias[1] = -0.5f;
  save_transform(dir + "/t.ftr1", t);
  const FeatureTransform back = load_transform(dir + "/t.ftr1");
  CHECK(back.c_in == 4);
  CHECK(back.c_out == 4);
  CHECK(back.weights == t.weights);
  CHECK(back.bias == t.bias);
}

TEST_CASE("scene directory round trip is lossless for quantized views") {
  const std::string dir = temp_dir("scene");
  SynthConfig config;
  config.num_objects_min = config.num_objects_max = 2;
  config.image_size = 48;
  config.num_views = 3;
  const SynthScene scene = generate_scene(99, config);

  save_scene_dir(dir, scene.views, &scene.gt);
  CHECK(fs::exists(dir + "/view_000_rgb.png"));
  CHECK(fs::exists(dir + "/view_002_depth.png"));
  CHECK(fs::exists(dir + "/cameras.json"));

  const std::vector<PosedImage> views = load_scene_views(dir);
  REQUIRE(views.size() == 3);
  for (std::size_t v = 0; v < views.size(); ++v) {
    CHECK(views[v].intrinsics.fx == scene.views[v].intrinsics.fx);
    CHECK(views[v].pose.world_to_cam.isApprox(scene.views[v].pose.world_to_cam, 1e-12));
    for (std::size_t i = 0; i < views[v].depth.size(); ++i)
      CHECK(views[v].depth[i] == doctest::Approx(scene.views[v].depth[i]).epsilon(1e-6));
    for (std::size_t i = 0; i < views[v].rgb.size(); ++i)
      CHECK(views[v].rgb[i] == doctest::Approx(scene.views[v].rgb[i]).epsilon(1e-6));
  }

  const auto gt = load_scene_gt(dir);
  REQUIRE(gt.has_value());
  REQUIRE(gt->objects.size() == scene.gt.objects.size());
  for (std::size_t i = 0; i < gt->objects.size(); ++i) {
    CHECK(gt->objects[i].category == scene.gt.objects[i].category);
    CHECK(gt->objects[i].yaw_deg == doctest::Approx(scene.gt.objects[i].yaw_deg));
    CHECK(gt->objects[i].box.min_corner.isApprox(scene.gt.objects[i].box.min_corner, 1e-12));
  }
}

TEST_CASE("labeled proposal JSON lines round trip") {
  const std::string dir = temp_dir("props");
  std::vector<LabeledProposal> props(2);
  props[0].proposal.box = {Vec3(0, 0, 0), Vec3(1, 2, 3)};
  props[0].proposal.confidence = 0.75;
  props[0].label = ProposalLabel::Valid;
  props[0].prototype_sim = 0.9;
  props[0].surround_sim = 0.1;
  props[1].proposal.box = {Vec3(-1, -1, -1), Vec3(0, 0, 0)};
  props[1].label = ProposalLabel::Invalid;
  props[1].surround_sim = 0.8;

  const std::string jsonl = proposal_jsonl(props[0]);
  CHECK(jsonl.find("\"label\":\"valid\"") != std::string::npos);
  CHECK(jsonl.find("\"confidence\":0.75") != std::string::npos);

  save_labeled_proposals(dir + "/p.jsonl", props);
  const auto back = load_labeled_proposals(dir + "/p.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].label == ProposalLabel::Valid);
  CHECK(back[0].proposal.confidence == 0.75);
  CHECK(back[1].label == ProposalLabel::Invalid);
  CHECK(back[1].proposal.box.max_corner == Vec3(0, 0, 0));
}

TEST_CASE("detector json reload rebuilds normalized templates from the dictionary") {
  const std::string dir = temp_dir("det");
  PrototypeDictionary dict;
  Rng rng(4);
  for (int k = 0; k < 2; ++k) {
    Prototype p;
    p.id = k;
    p.tensor = ObjectTensor(2);
    for (float& v : p.tensor.data) v = static_cast<float>(rng.uniform(0, 2));
    dict.prototypes.push_back(std::move(p));
  }
  Detector det;
  det.confidence_threshold = 0.85;
  det.stride_voxels = 3;
  det.box_size = Vec3(0.2, 0.25, 0.3);
  det.templates.push_back(normalized_template(dict.prototypes[1].tensor));
  det.template_prototype_ids.push_back(1);

  save_detector_json(dir + "/detector.json", det);
  const Detector back = load_detector_json(dir + "/detector.json", dict);
  CHECK(back.confidence_threshold == 0.85);
  CHECK(back.stride_voxels == 3);
  CHECK(back.box_size == Vec3(0.2, 0.25, 0.3));
  REQUIRE(back.templates.size() == 1);
  CHECK(back.template_prototype_ids[0] == 1);
  CHECK(back.templates[0].data == det.templates[0].data);  // bitwise
}

TEST_CASE("list_scene_dirs finds only directories holding cameras.json") {
  const std::string dir = temp_dir("list");
  fs::create_directories(dir + "/scene_001");
  fs::create_directories(dir + "/scene_000");
  fs::create_directories(dir + "/not_a_scene");
  std::ofstream(dir + "/scene_000/cameras.json") << "[]";
  std::ofstream(dir + "/scene_001/cameras.json") << "[]";
  const auto dirs = list_scene_dirs(dir);
  REQUIRE(dirs.size() == 2);
  CHECK(dirs[0].ends_with("scene_000"));
  CHECK(dirs[1].ends_with("scene_001"));
}
