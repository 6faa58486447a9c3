#include "voxproto/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace voxproto {

RunConfig::RunConfig() {
  // the synthesis grid doubles as the lifting grid
  pipeline.grid = synth.grid;
}

PipelineConfig::PipelineConfig() {
  grid.aabb_min = Vec3(-0.6, 0.0, -0.6);
  grid.aabb_max = Vec3(0.6, 1.2, 0.6);
  grid.resolution = {48, 48, 48};
}

void PipelineConfig::validate() const {
  grid.validate();
  auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!in_unit(diversity_thresh) || !in_unit(valid_thresh) ||
      !in_unit(invalid_thresh) || !in_unit(detector_conf))
    throw ConfigError("thresholds must lie in (0,1)");
  if (k_max < 1) throw ConfigError("k_max must be >= 1");
  if (rotation_step_deg <= 0.0) throw ConfigError("rotation_step_deg must be > 0");
  if (detector_stride < 1) throw ConfigError("detector_stride must be >= 1");
  if (em_iters < 0 || mining_rounds < 0 || epochs < 0)
    throw ConfigError("iteration counts must be >= 0");
  if (min_views_frac <= 0.0 || min_views_frac > 1.0)
    throw ConfigError("min_views_frac must be in (0,1]");
  if (min_voxels < 1) throw ConfigError("min_voxels must be >= 1");
  if (jitter_px < 0.0) throw ConfigError("jitter_px must be >= 0");
  if (pool_size < 1 || top_n < 1 || top_retrievals < 1)
    throw ConfigError("mining sizes must be >= 1");
  if (negatives_per_positive < 0)
    throw ConfigError("negatives_per_positive must be >= 0");
}

namespace {

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse number '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  const double v = parse_double(key, value);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v)
    throw ConfigError("config key '" + key + "': expected an integer, got '" + value + "'");
  return i;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing junk");
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse seed '" + value + "'");
  }
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

void apply_config_entry(RunConfig& config, const std::string& key,
                        const std::string& value) {
  using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      // shared grid
      {"grid_min_x", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.grid.aabb_min.x() = c.synth.grid.aabb_min.x() = parse_double(k, v); }},
      {"grid_min_y", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.grid.aabb_min.y() = c.synth.grid.aabb_min.y() = parse_double(k, v); }},
      {"grid_min_z", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.grid.aabb_min.z() = c.synth.grid.aabb_min.z() = parse_double(k, v); }},
      {"grid_max_x", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.grid.aabb_max.x() = c.synth.grid.aabb_max.x() = parse_double(k, v); }},
      {"grid_max_y", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.grid.aabb_max.y() = c.synth.grid.aabb_max.y() = parse_double(k, v); }},
      {"grid_max_z", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.grid.aabb_max.z() = c.synth.grid.aabb_max.z() = parse_double(k, v); }},
      {"grid_res", [](RunConfig& c, const std::string& k, const std::string& v) {
         const int r = parse_int(k, v);
         c.pipeline.grid.resolution = {r, r, r};
         c.synth.grid.resolution = {r, r, r}; }},
      {"grid_res_x", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.grid.resolution[0] = c.synth.grid.resolution[0] = parse_int(k, v); }},
      {"grid_res_y", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.grid.resolution[1] = c.synth.grid.resolution[1] = parse_int(k, v); }},
      {"grid_res_z", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.grid.resolution[2] = c.synth.grid.resolution[2] = parse_int(k, v); }},
      // pipeline
      {"rotation_step_deg", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.rotation_step_deg = parse_double(k, v); }},
      {"k_max", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.k_max = parse_int(k, v); }},
      {"diversity_thresh", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.diversity_thresh = parse_double(k, v); }},
      {"valid_thresh", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.valid_thresh = parse_double(k, v); }},
      {"invalid_thresh", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.invalid_thresh = parse_double(k, v); }},
      {"detector_conf", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.detector_conf = parse_double(k, v); }},
      {"detector_stride", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.detector_stride = parse_int(k, v); }},
      {"nms_iou", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.nms_iou = parse_double(k, v); }},
      {"em_iters", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.em_iters = parse_int(k, v); }},
      {"em_loss_tol", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.em_loss_tol = parse_double(k, v); }},
      {"mining_rounds", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.mining_rounds = parse_int(k, v); }},
      {"pool_size", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.pool_size = parse_int(k, v); }},
      {"top_n", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.top_n = parse_int(k, v); }},
      {"top_retrievals", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.top_retrievals = parse_int(k, v); }},
      {"negatives_per_positive", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.negatives_per_positive = parse_int(k, v); }},
      {"margin_pos", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.margin_pos = parse_double(k, v); }},
      {"margin_neg", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.margin_neg = parse_double(k, v); }},
      {"learning_rate", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.learning_rate = parse_double(k, v); }},
      {"epochs", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.epochs = parse_int(k, v); }},
      {"min_views_frac", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.min_views_frac = parse_double(k, v); }},
      {"min_voxels", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.min_voxels = parse_int(k, v); }},
      {"jitter_px", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.jitter_px = parse_double(k, v); }},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.pipeline.seed = parse_u64(k, v); }},
      // synthesis
      {"num_objects_min", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.synth.num_objects_min = parse_int(k, v); }},
      {"num_objects_max", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.synth.num_objects_max = parse_int(k, v); }},
      {"scale_min", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.synth.scale_min = parse_double(k, v); }},
      {"scale_max", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.synth.scale_max = parse_double(k, v); }},
      {"num_views", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.synth.num_views = parse_int(k, v); }},
      {"image_size", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.synth.image_size = parse_int(k, v); }},
      {"color_noise", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.synth.color_noise = parse_double(k, v); }},
      {"object_size", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.synth.object_size = parse_double(k, v); }},
      {"camera_radius", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.synth.camera_radius = parse_double(k, v); }},
      {"camera_height", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.synth.camera_height = parse_double(k, v); }},
      {"ground_half_extent", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.synth.ground_half_extent = parse_double(k, v); }},
      // execution
      {"threads", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.threads = parse_int(k, v); }},
  };

  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(config, key, value);
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  RunConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    apply_config_entry(config, key, value);
  }
  return config;
}

std::string dump_config(const RunConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "grid_min_x = " << c.pipeline.grid.aabb_min.x() << "\n";
  out << "grid_min_y = " << c.pipeline.grid.aabb_min.y() << "\n";
  out << "grid_min_z = " << c.pipeline.grid.aabb_min.z() << "\n";
  out << "grid_max_x = " << c.pipeline.grid.aabb_max.x() << "\n";
  out << "grid_max_y = " << c.pipeline.grid.aabb_max.y() << "\n";
  out << "grid_max_z = " << c.pipeline.grid.aabb_max.z() << "\n";
  out << "grid_res_x = " << c.pipeline.grid.resolution[0] << "\n";
  out << "grid_res_y = " << c.pipeline.grid.resolution[1] << "\n";
  out << "grid_res_z = " << c.pipeline.grid.resolution[2] << "\n";
  out << "rotation_step_deg = " << c.pipeline.rotation_step_deg << "\n";
  out << "k_max = " << c.pipeline.k_max << "\n";
  out << "diversity_thresh = " << c.pipeline.diversity_thresh << "\n";
  out << "valid_thresh = " << c.pipeline.valid_thresh << "\n";
  out << "invalid_thresh = " << c.pipeline.invalid_thresh << "\n";
  out << "detector_conf = " << c.pipeline.detector_conf << "\n";
  out << "detector_stride = " << c.pipeline.detector_stride << "\n";
  out << "nms_iou = " << c.pipeline.nms_iou << "\n";
  out << "em_iters = " << c.pipeline.em_iters << "\n";
  out << "em_loss_tol = " << c.pipeline.em_loss_tol << "\n";
  out << "mining_rounds = " << c.pipeline.mining_rounds << "\n";
  out << "pool_size = " << c.pipeline.pool_size << "\n";
  out << "top_n = " << c.pipeline.top_n << "\n";
  out << "top_retrievals = " << c.pipeline.top_retrievals << "\n";
  out << "negatives_per_positive = " << c.pipeline.negatives_per_positive << "\n";
  out << "margin_pos = " << c.pipeline.margin_pos << "\n";
  out << "margin_neg = " << c.pipeline.margin_neg << "\n";
  out << "learning_rate = " << c.pipeline.learning_rate << "\n";
  out << "epochs = " << c.pipeline.epochs << "\n";
  out << "min_views_frac = " << c.pipeline.min_views_frac << "\n";
  out << "min_voxels = " << c.pipeline.min_voxels << "\n";
  out << "jitter_px = " << c.pipeline.jitter_px << "\n";
  out << "seed = " << c.pipeline.seed << "\n";
  out << "num_objects_min = " << c.synth.num_objects_min << "\n";
  out << "num_objects_max = " << c.synth.num_objects_max << "\n";
  out << "scale_min = " << c.synth.scale_min << "\n";
  out << "scale_max = " << c.synth.scale_max << "\n";
  out << "num_views = " << c.synth.num_views << "\n";
  out << "image_size = " << c.synth.image_size << "\n";
  out << "color_noise = " << c.synth.color_noise << "\n";
  out << "object_size = " << c.synth.object_size << "\n";
  out << "camera_radius = " << c.synth.camera_radius << "\n";
  out << "camera_height = " << c.synth.camera_height << "\n";
  out << "ground_half_extent = " << c.synth.ground_half_extent << "\n";
  out << "threads = " << c.threads << "\n";
  return out.str();
}

}  // namespace voxproto
