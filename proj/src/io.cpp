#include "voxproto/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "voxproto/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace voxproto {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError("unexpected end of file while reading u32");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

float read_f32(std::istream& in) {
  const std::uint32_t bits = read_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void write_f32_block(std::ostream& out, const float* data, std::size_t n) {
  // Little-endian hosts write the raw block; this project only targets them.
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
}

void read_f32_block(std::istream& in, float* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 4));
  if (!in) throw IoError("unexpected end of file while reading f32 block");
}

void expect_magic(std::istream& in, const char* magic, const std::string& path) {
  char buf[4];
  in.read(buf, 4);
  if (!in || std::memcmp(buf, magic, 4) != 0)
    throw IoError(path + ": bad magic, expected " + magic);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return in;
}

}  // namespace

// ---------------------------------------------------------------------------
// VXG1
// ---------------------------------------------------------------------------

void save_voxel_grid(const std::string& path, const VoxelGrid& grid) {
  std::ofstream out = open_out(path);
  out.write("VXG1", 4);
  write_u32(out, static_cast<std::uint32_t>(grid.spec.w()));
  write_u32(out, static_cast<std::uint32_t>(grid.spec.h()));
  write_u32(out, static_cast<std::uint32_t>(grid.spec.d()));
  write_u32(out, static_cast<std::uint32_t>(grid.channels));
  for (int a = 0; a < 3; ++a) write_f32(out, static_cast<float>(grid.spec.aabb_min[a]));
  for (int a = 0; a < 3; ++a) write_f32(out, static_cast<float>(grid.spec.aabb_max[a]));
  write_f32_block(out, grid.data.data(), grid.data.size());
  if (!out) throw IoError("write failed: " + path);
}

VoxelGrid load_voxel_grid(const std::string& path) {
  std::ifstream in = open_in(path);
  expect_magic(in, "VXG1", path);
  GridSpec spec;
  spec.resolution[0] = static_cast<int>(read_u32(in));
  spec.resolution[1] = static_cast<int>(read_u32(in));
  spec.resolution[2] = static_cast<int>(read_u32(in));
  const int channels = static_cast<int>(read_u32(in));
  for (int a = 0; a < 3; ++a) spec.aabb_min[a] = read_f32(in);
  for (int a = 0; a < 3; ++a) spec.aabb_max[a] = read_f32(in);
  VoxelGrid grid(spec, channels);
  read_f32_block(in, grid.data.data(), grid.data.size());
  return grid;
}

void save_occupancy_grid(const std::string& path, const OccupancyGrid& occ) {
  VoxelGrid grid(occ.spec, 1);
  for (std::size_t i = 0; i < occ.labels.size(); ++i) {
    switch (occ.labels[i]) {
      case Occ::Free: grid.data[i] = -1.0f; break;
      case Occ::Occupied: grid.data[i] = 1.0f; break;
      case Occ::Unknown: grid.data[i] = 0.0f; break;
    }
  }
  save_voxel_grid(path, grid);
}

OccupancyGrid load_occupancy_grid(const std::string& path) {
  const VoxelGrid grid = load_voxel_grid(path);
  if (grid.channels != 1)
    throw IoError(path + ": occupancy grid must have one channel");
  OccupancyGrid occ(grid.spec);
  for (std::size_t i = 0; i < occ.labels.size(); ++i) {
    if (grid.data[i] > 0.5f) occ.labels[i] = Occ::Occupied;
    else if (grid.data[i] < -0.5f) occ.labels[i] = Occ::Free;
    else occ.labels[i] = Occ::Unknown;
  }
  return occ;
}

// ---------------------------------------------------------------------------
// PRO1 / FTR1
// ---------------------------------------------------------------------------

void save_prototypes(const std::string& path, const PrototypeDictionary& dict) {
  std::ofstream out = open_out(path);
  out.write("PRO1", 4);
  write_u32(out, static_cast<std::uint32_t>(dict.prototypes.size()));
  const int channels = dict.empty() ? 0 : dict.prototypes.front().tensor.channels;
  write_u32(out, static_cast<std::uint32_t>(channels));
  for (const Prototype& p : dict.prototypes) {
    write_u32(out, static_cast<std::uint32_t>(p.id));
    write_u32(out, static_cast<std::uint32_t>(p.assigned_count));
    write_f32_block(out, p.tensor.data.data(), p.tensor.data.size());
  }
  if (!out) throw IoError("write failed: " + path);
}

PrototypeDictionary load_prototypes(const std::string& path) {
  std::ifstream in = open_in(path);
  expect_magic(in, "PRO1", path);
  const int k = static_cast<int>(read_u32(in));
  const int channels = static_cast<int>(read_u32(in));
  PrototypeDictionary dict;
  dict.prototypes.reserve(k);
  for (int i = 0; i < k; ++i) {
    Prototype p;
    p.id = static_cast<int>(read_u32(in));
    p.assigned_count = static_cast<std::int64_t>(read_u32(in));
    p.tensor = ObjectTensor(channels);
    read_f32_block(in, p.tensor.data.data(), p.tensor.data.size());
    dict.prototypes.push_back(std::move(p));
  }
  return dict;
}

void save_transform(const std::string& path, const FeatureTransform& transform) {
  std::ofstream out = open_out(path);
  out.write("FTR1", 4);
  write_u32(out, static_cast<std::uint32_t>(transform.c_out));
  write_u32(out, static_cast<std::uint32_t>(transform.c_in));
  write_f32_block(out, transform.weights.data(), transform.weights.size());
  write_f32_block(out, transform.bias.data(), transform.bias.size());
  if (!out) throw IoError("write failed: " + path);
}

FeatureTransform load_transform(const std::string& path) {
  std::ifstream in = open_in(path);
  expect_magic(in, "FTR1", path);
  FeatureTransform t;
  t.c_out = static_cast<int>(read_u32(in));
  t.c_in = static_cast<int>(read_u32(in));
  t.weights.resize(static_cast<std::size_t>(t.c_out) * t.c_in);
  t.bias.resize(t.c_out);
  read_f32_block(in, t.weights.data(), t.weights.size());
  read_f32_block(in, t.bias.data(), t.bias.size());
  return t;
}

// ---------------------------------------------------------------------------
// Scene dataset directory
// ---------------------------------------------------------------------------

namespace {

std::string view_name(int index, const char* kind) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "view_%03d_%s.png", index, kind);
  return buf;
}

}  // namespace

void save_scene_dir(const std::string& dir, const std::vector<PosedImage>& views,
                    const SceneGT* gt) {
  fs::create_directories(dir);
  json cams = json::array();
  for (std::size_t i = 0; i < views.size(); ++i) {
    const PosedImage& view = views[i];
    const int w = view.width(), h = view.height();

    Image8 rgb;
    rgb.width = w;
    rgb.height = h;
    rgb.pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t p = 0; p < rgb.pixels.size(); ++p)
      rgb.pixels[p] = static_cast<std::uint8_t>(
          std::lround(std::clamp(view.rgb[p], 0.0f, 1.0f) * 255.0f));
    write_png_rgb8(dir + "/" + view_name(static_cast<int>(i), "rgb"), rgb);

    Image16 depth;
    depth.width = w;
    depth.height = h;
    depth.pixels.resize(static_cast<std::size_t>(w) * h);
    for (std::size_t p = 0; p < depth.pixels.size(); ++p) {
      const double mm = std::clamp(static_cast<double>(view.depth[p]) * 1000.0, 0.0, 65535.0);
      depth.pixels[p] = static_cast<std::uint16_t>(std::lround(mm));
    }
    write_png_gray16(dir + "/" + view_name(static_cast<int>(i), "depth"), depth);

    json cam;
    cam["fx"] = view.intrinsics.fx;
    cam["fy"] = view.intrinsics.fy;
    cam["cx"] = view.intrinsics.cx;
    cam["cy"] = view.intrinsics.cy;
    json m = json::array();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m.push_back(view.pose.world_to_cam(r, c));
    cam["world_to_cam"] = m;
    cams.push_back(cam);
  }
  {
    std::ofstream out(dir + "/cameras.json", std::ios::trunc);
    out << cams.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + dir + "/cameras.json");
  }
  if (gt) {
    json g;
    g["views"] = gt->num_views;
    json objs = json::array();
    for (const ObjectGT& o : gt->objects) {
      json jo;
      jo["category"] = o.category;
      jo["box"] = {o.box.min_corner.x(), o.box.min_corner.y(), o.box.min_corner.z(),
                   o.box.max_corner.x(), o.box.max_corner.y(), o.box.max_corner.z()};
      jo["yaw_deg"] = o.yaw_deg;
      jo["scale"] = o.scale;
      objs.push_back(jo);
    }
    g["objects"] = objs;
    std::ofstream out(dir + "/gt.json", std::ios::trunc);
    out << g.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + dir + "/gt.json");
  }
}

std::vector<PosedImage> load_scene_views(const std::string& dir) {
  std::ifstream cam_in(dir + "/cameras.json");
  if (!cam_in) throw IoError("missing cameras.json in " + dir);
  json cams = json::parse(cam_in);
  std::vector<PosedImage> views;
  views.reserve(cams.size());
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const json& cam = cams[i];
    const Image8 rgb = read_png_rgb8(dir + "/" + view_name(static_cast<int>(i), "rgb"));
    const Image16 depth =
        read_png_gray16(dir + "/" + view_name(static_cast<int>(i), "depth"));
    if (rgb.width != depth.width || rgb.height != depth.height)
      throw IoError("rgb/depth size mismatch in " + dir);

    PosedImage view;
    view.intrinsics.fx = cam.at("fx").get<double>();
    view.intrinsics.fy = cam.at("fy").get<double>();
    view.intrinsics.cx = cam.at("cx").get<double>();
    view.intrinsics.cy = cam.at("cy").get<double>();
    view.intrinsics.width = rgb.width;
    view.intrinsics.height = rgb.height;
    const json& m = cam.at("world_to_cam");
    if (m.size() != 16) throw IoError("world_to_cam must hold 16 floats");
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        view.pose.world_to_cam(r, c) = m[static_cast<std::size_t>(r) * 4 + c].get<double>();

    view.rgb.resize(rgb.pixels.size());
    for (std::size_t p = 0; p < rgb.pixels.size(); ++p)
      view.rgb[p] = static_cast<float>(rgb.pixels[p]) / 255.0f;
    view.depth.resize(depth.pixels.size());
    for (std::size_t p = 0; p < depth.pixels.size(); ++p)
      view.depth[p] = static_cast<float>(depth.pixels[p]) / 1000.0f;
    views.push_back(std::move(view));
  }
  return views;
}

std::optional<SceneGT> load_scene_gt(const std::string& dir) {
  std::ifstream in(dir + "/gt.json");
  if (!in) return std::nullopt;
  json g = json::parse(in);
  SceneGT gt;
  gt.num_views = g.at("views").get<int>();
  for (const json& jo : g.at("objects")) {
    ObjectGT o;
    o.category = jo.at("category").get<int>();
    const json& b = jo.at("box");
    o.box.min_corner = Vec3(b[0].get<double>(), b[1].get<double>(), b[2].get<double>());
    o.box.max_corner = Vec3(b[3].get<double>(), b[4].get<double>(), b[5].get<double>());
    o.yaw_deg = jo.at("yaw_deg").get<double>();
    o.scale = jo.at("scale").get<double>();
    gt.objects.push_back(o);
  }
  return gt;
}

// ---------------------------------------------------------------------------
// Proposals, parses, detector metadata
// ---------------------------------------------------------------------------

namespace {

const char* label_name(ProposalLabel label) {
  switch (label) {
    case ProposalLabel::Valid: return "valid";
    case ProposalLabel::Invalid: return "invalid";
    case ProposalLabel::Unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

ProposalLabel label_from_name(const std::string& name) {
  if (name == "valid") return ProposalLabel::Valid;
  if (name == "invalid") return ProposalLabel::Invalid;
  if (name == "unlabeled") return ProposalLabel::Unlabeled;
  throw IoError("unknown proposal label: " + name);
}

json box_json(const Box3D& box) {
  return {box.min_corner.x(), box.min_corner.y(), box.min_corner.z(),
          box.max_corner.x(), box.max_corner.y(), box.max_corner.z()};
}

Box3D box_from_json(const json& b) {
  Box3D box;
  box.min_corner = Vec3(b[0].get<double>(), b[1].get<double>(), b[2].get<double>());
  box.max_corner = Vec3(b[3].get<double>(), b[4].get<double>(), b[5].get<double>());
  return box;
}

}  // namespace

std::string proposal_jsonl(const LabeledProposal& p) {
  json j;
  j["box"] = box_json(p.proposal.box);
  j["confidence"] = p.proposal.confidence;
  j["label"] = label_name(p.label);
  j["prototype_sim"] = p.prototype_sim;
  j["surround_sim"] = p.surround_sim;
  return j.dump();
}

void save_labeled_proposals(const std::string& path,
                            const std::vector<LabeledProposal>& proposals) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const LabeledProposal& p : proposals) out << proposal_jsonl(p) << "\n";
}

std::vector<LabeledProposal> load_labeled_proposals(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::vector<LabeledProposal> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    LabeledProposal p;
    p.proposal.box = box_from_json(j.at("box"));
    p.proposal.confidence = j.at("confidence").get<double>();
    p.label = label_from_name(j.at("label").get<std::string>());
    p.prototype_sim = j.at("prototype_sim").get<double>();
    p.surround_sim = j.at("surround_sim").get<double>();
    out.push_back(p);
  }
  return out;
}

std::string scene_parse_json(const SceneParse& parse) {
  json arr = json::array();
  for (const SceneParseRecord& r : parse) {
    json j;
    j["box"] = box_json(r.box);
    j["prototype"] = r.prototype_id;
    j["rotation_deg"] = r.rotation_deg;
    j["confidence"] = r.confidence;
    arr.push_back(j);
  }
  return arr.dump(2);
}

void save_scene_parse(const std::string& path, const SceneParse& parse) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << scene_parse_json(parse) << "\n";
}

void save_detector_json(const std::string& path, const Detector& det) {
  json j;
  j["confidence_threshold"] = det.confidence_threshold;
  j["stride_voxels"] = det.stride_voxels;
  j["box_size"] = {det.box_size.x(), det.box_size.y(), det.box_size.z()};
  j["template_prototype_ids"] = det.template_prototype_ids;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

Detector load_detector_json(const std::string& path,
                            const PrototypeDictionary& dict) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  json j = json::parse(in);
  Detector det;
  det.confidence_threshold = j.at("confidence_threshold").get<double>();
  det.stride_voxels = j.at("stride_voxels").get<int>();
  const json& bs = j.at("box_size");
  det.box_size = Vec3(bs[0].get<double>(), bs[1].get<double>(), bs[2].get<double>());
  for (const json& id : j.at("template_prototype_ids")) {
    const Prototype* p = dict.find(id.get<int>());
    if (!p) throw IoError(path + ": template references missing prototype");
    ObjectTensor t = p->tensor;
    const double norm = std::sqrt(dot_product(t.data, t.data));
    if (norm > 1e-12)
      for (float& v : t.data) v = static_cast<float>(v / norm);
    det.templates.push_back(std::move(t));
    det.template_prototype_ids.push_back(p->id);
  }
  return det;
}

std::vector<std::string> list_scene_dirs(const std::string& dataset_dir) {
  std::vector<std::string> dirs;
  if (!fs::is_directory(dataset_dir)) return dirs;
  for (const auto& entry : fs::directory_iterator(dataset_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "cameras.json"))
      dirs.push_back(entry.path().string());
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

}  // namespace voxproto
