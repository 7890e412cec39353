#include "savid/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <yaml-cpp/yaml.h>

#include "savid/depth.hpp"
#include "savid/errors.hpp"

namespace savid {

namespace {

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

using Setter = std::function<void(PipelineConfig&, const YAML::Node&, const std::filesystem::path&)>;

template <class T>
Setter field(T PipelineConfig::*member) {
  return [member](PipelineConfig& c, const YAML::Node& n, const std::filesystem::path&) { c.*member = n.as<T>(); };
}

Setter vec3(Vec3 PipelineConfig::*member) {
  return [member](PipelineConfig& c, const YAML::Node& n, const std::filesystem::path&) {
    const auto v = n.as<std::vector<double>>();
    if (v.size() != 3) throw ValidationError("expected a list of 3 numbers");
    c.*member = {v[0], v[1], v[2]};
  };
}

Setter flag_setter(bool PipelineConfig::*member) { return field(member); }

const std::unordered_map<std::string, Setter>& setters() {
  static const std::unordered_map<std::string, Setter> table = {
      {"channels", field(&PipelineConfig::channels)},
      {"heads", field(&PipelineConfig::heads)},
      {"window", field(&PipelineConfig::window)},
      {"keypoints", field(&PipelineConfig::keypoints)},
      {"sequence_length", field(&PipelineConfig::sequence_length)},
      {"dropout", field(&PipelineConfig::dropout)},
      {"depth_scale", field(&PipelineConfig::depth_scale)},
      {"nms_proposal_iou", field(&PipelineConfig::nms_proposal_iou)},
      {"nms_final_iou", field(&PipelineConfig::nms_final_iou)},
      {"ap_iou", field(&PipelineConfig::ap_iou)},
      {"ap_mode",
       [](PipelineConfig& c, const YAML::Node& n, const std::filesystem::path&) {
         const auto v = n.as<std::string>();
         if (v == "interp101") c.ap_mode = ApMode::interp101;
         else if (v == "exact") c.ap_mode = ApMode::exact;
         else throw ValidationError("ap_mode must be interp101 or exact");
       }},
      {"image_height", field(&PipelineConfig::image_height)},
      {"image_width", field(&PipelineConfig::image_width)},
      {"focal_length", field(&PipelineConfig::focal_length)},
      {"camera_position", vec3(&PipelineConfig::camera_position)},
      {"grid_origin", vec3(&PipelineConfig::grid_origin)},
      {"voxel_size", vec3(&PipelineConfig::voxel_size)},
      {"grid_dims",
       [](PipelineConfig& c, const YAML::Node& n, const std::filesystem::path&) {
         const auto v = n.as<std::vector<int>>();
         if (v.size() != 3) throw ValidationError("expected a list of 3 integers");
         c.grid_dims = {v[0], v[1], v[2]};
       }},
      {"backbone_widths", field(&PipelineConfig::backbone_widths)},
      {"model_seed", field(&PipelineConfig::model_seed)},
      {"scene_seed", field(&PipelineConfig::scene_seed)},
      {"corruption_seed", field(&PipelineConfig::corruption_seed)},
      {"num_objects", field(&PipelineConfig::num_objects)},
      {"range_m", field(&PipelineConfig::range_m)},
      {"asmn_mode",
       [](PipelineConfig& c, const YAML::Node& n, const std::filesystem::path&) {
         const auto v = n.as<std::string>();
         if (v == "attention") c.asmn_mode = AsmnMode::attention;
         else if (v == "elementwise") c.asmn_mode = AsmnMode::elementwise;
         else throw ValidationError("asmn_mode must be attention or elementwise");
       }},
      {"asmn_sparsity", field(&PipelineConfig::asmn_sparsity)},
      {"kgf_cosine",
       [](PipelineConfig& c, const YAML::Node& n, const std::filesystem::path&) {
         const auto v = n.as<std::string>();
         if (v == "paper") c.kgf.cosine = CosineMode::paper;
         else if (v == "standard") c.kgf.cosine = CosineMode::standard;
         else throw ValidationError("kgf_cosine must be paper or standard");
       }},
      {"kgf_neighbors",
       [](PipelineConfig& c, const YAML::Node& n, const std::filesystem::path&) {
         const auto v = n.as<std::string>();
         if (v == "window3x3") c.kgf.neighbors.mode = NeighborMode::window3x3;
         else if (v == "knn") c.kgf.neighbors.mode = NeighborMode::knn;
         else throw ValidationError("kgf_neighbors must be window3x3 or knn");
       }},
      {"kgf_k",
       [](PipelineConfig& c, const YAML::Node& n, const std::filesystem::path&) {
         c.kgf.neighbors.k = n.as<std::size_t>();
       }},
      {"use_gman", flag_setter(&PipelineConfig::use_gman)},
      {"use_asmn", flag_setter(&PipelineConfig::use_asmn)},
      {"use_kgf", flag_setter(&PipelineConfig::use_kgf)},
      {"threads", field(&PipelineConfig::threads)},
      {"severity_table",
       [](PipelineConfig& c, const YAML::Node& n, const std::filesystem::path& base) {
         std::filesystem::path p = n.as<std::string>();
         if (p.is_relative() && !base.empty()) p = base / p;
         c.severity = SeverityTable::load(p);
       }},
  };
  return table;
}

void apply_key(PipelineConfig& config, const std::string& key, const YAML::Node& value,
               const std::filesystem::path& base_dir) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ValidationError("unknown config key '" + key + "'");
  try {
    it->second(config, value, base_dir);
  } catch (const YAML::Exception& e) {
    throw ValidationError("config key '" + key + "': " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError("config key '" + key + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Forward helpers
// ---------------------------------------------------------------------------

template <class Fn>
auto in_stage(const char* stage, Fn&& fn) {
  const std::string prefix = std::string("stage ") + stage + ": ";
  try {
    return fn();
  } catch (const ShapeError& e) {
    throw ShapeError(prefix + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(prefix + e.what());
  } catch (const NotImplementedError& e) {
    throw NotImplementedError(prefix + e.what());
  }
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::uint64_t frame_seed(std::uint64_t seed, std::size_t frame) {
  return seed + 0x9E3779B97F4A7C15ULL * (frame + 1);
}

// Proxy scorer helpers.

struct Footprint {
  bool visible = false;
  std::size_t r0 = 0, r1 = 0, c0 = 0, c1 = 0;
};

Footprint image_footprint(const Box3D& b, const CameraModel& cam) {
  double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
  for (const auto& xy : b.bev_corners()) {
    for (double z : {b.center[2] - b.size[2] / 2.0, b.center[2] + b.size[2] / 2.0}) {
      const Vec3 pc = cam.to_camera({xy[0], xy[1], z});
      if (pc[2] <= 0.1) return {};
      const double u = cam.fx * pc[0] / pc[2] + cam.cx, v = cam.fy * pc[1] / pc[2] + cam.cy;
      umin = std::min(umin, u);
      umax = std::max(umax, u);
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  }
  const auto w = static_cast<double>(cam.width), h = static_cast<double>(cam.height);
  if (umax < 0.0 || vmax < 0.0 || umin >= w || vmin >= h) return {};
  Footprint f;
  f.visible = true;
  f.c0 = static_cast<std::size_t>(std::max(0.0, std::floor(umin)));
  f.c1 = static_cast<std::size_t>(std::min(w - 1.0, std::floor(umax)));
  f.r0 = static_cast<std::size_t>(std::max(0.0, std::floor(vmin)));
  f.r1 = static_cast<std::size_t>(std::min(h - 1.0, std::floor(vmax)));
  return f;
}

// Peak of the channel-mean activation inside the footprint, standardized
// against the whole map and squashed to (0, 1).
class AppearanceScore {
 public:
  explicit AppearanceScore(const Tensor& features) : h_(features.dim(0)), w_(features.dim(1)) {
    const std::size_t c = features.dim(2);
    activation_.resize(h_ * w_);
    for (std::size_t i = 0; i < h_ * w_; ++i) {
      double s = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) s += features[i * c + ch];
      activation_[i] = s / static_cast<double>(c);
    }
    for (double a : activation_) mean_ += a;
    mean_ /= static_cast<double>(activation_.size());
    for (double a : activation_) std_ += (a - mean_) * (a - mean_);
    std_ = std::sqrt(std_ / static_cast<double>(activation_.size()));
  }

  double operator()(const Box3D& box, const CameraModel& cam) const {
    const Footprint f = image_footprint(box, cam);
    if (!f.visible || f.r1 >= h_ || f.c1 >= w_) return 0.5;
    double peak = -1e300;
    for (std::size_t r = f.r0; r <= f.r1; ++r) {
      for (std::size_t c = f.c0; c <= f.c1; ++c) peak = std::max(peak, activation_[r * w_ + c]);
    }
    const double z = std_ > 0.0 ? (peak - mean_) / std_ : 0.0;
    return sigmoid(z);
  }

 private:
  std::size_t h_, w_;
  std::vector<double> activation_;
  double mean_ = 0.0;
  double std_ = 0.0;
};

struct Support {
  std::size_t count = 0;
  double cx = 0.0;
  double cy = 0.0;
};

Support lidar_support(const PointCloud& cloud, const Box3D& box, double margin) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double hl = margin * box.size[0] / 2.0, hw = margin * box.size[1] / 2.0;
  const double top = box.center[2] + margin * box.size[2] / 2.0;
  Support out;
  for (const Point& p : cloud.points) {
    if (p.z <= kGroundZ + 0.15 || p.z > top) continue;
    const double dx = p.x - box.center[0], dy = p.y - box.center[1];
    if (std::abs(c * dx + s * dy) <= hl && std::abs(-s * dx + c * dy) <= hw) {
      ++out.count;
      out.cx += p.x;
      out.cy += p.y;
    }
  }
  if (out.count > 0) {
    out.cx /= static_cast<double>(out.count);
    out.cy /= static_cast<double>(out.count);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// PipelineConfig
// ---------------------------------------------------------------------------

void PipelineConfig::validate() const {
  if (channels == 0 || heads == 0 || channels % heads != 0) {
    throw ValidationError("channels (" + std::to_string(channels) + ") must be a positive multiple of heads (" +
                          std::to_string(heads) + ")");
  }
  if (window == 0) throw ValidationError("window size must be positive");
  if (sequence_length == 0) throw ValidationError("sequence_length must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
  for (double t : {nms_proposal_iou, nms_final_iou, ap_iou}) {
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("IoU thresholds must lie in [0, 1]");
  }
  if (image_height == 0 || image_width == 0) throw ValidationError("image size must be positive");
  if (!(focal_length > 0.0)) throw ValidationError("focal_length must be positive");
  for (double v : voxel_size) {
    if (!(v > 0.0)) throw ValidationError("voxel_size must be positive");
  }
  for (int d : grid_dims) {
    if (d <= 0) throw ValidationError("grid_dims must be positive");
  }
  if (backbone_widths.empty()) throw ValidationError("backbone_widths must not be empty");
  if (!(asmn_sparsity > 0.0 && asmn_sparsity <= 1.0)) throw ValidationError("asmn_sparsity must lie in (0, 1]");
  if (!(depth_scale > 0.0)) throw ValidationError("depth_scale must be positive");
  if (!(range_m > 0.0)) throw ValidationError("range_m must be positive");
  kgf.neighbors.validate();
  severity.validate();
}

SceneOptions PipelineConfig::scene_options() const {
  SceneOptions o;
  o.seed = scene_seed;
  o.num_objects = num_objects;
  o.range_m = range_m;
  o.frames = sequence_length;
  o.image_height = image_height;
  o.image_width = image_width;
  o.focal_length = focal_length;
  o.camera_position = camera_position;
  return o;
}

PipelineConfig PipelineConfig::from_yaml(const std::string& text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  PipelineConfig config;
  if (root.IsNull()) return config;
  if (!root.IsMap()) throw ValidationError("config: expected a mapping at top level");
  for (const auto& entry : root) apply_key(config, entry.first.as<std::string>(), entry.second, base_dir);
  config.validate();
  return config;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_yaml(buf.str(), path.parent_path());
}

void PipelineConfig::set(const std::string& key, const std::string& value, const std::filesystem::path& base_dir) {
  YAML::Node node;
  try {
    node = YAML::Load(value);
  } catch (const YAML::Exception& e) {
    throw ValidationError("override " + key + ": " + e.what());
  }
  apply_key(*this, key, node, base_dir);
}

// ---------------------------------------------------------------------------
// Model and forward pass
// ---------------------------------------------------------------------------

ModelParams ModelParams::random(const PipelineConfig& config) {
  config.validate();
  Rng rng(config.model_seed);
  ModelParams p;
  p.backbone = VoxelBackbone::random(4, config.backbone_widths, rng);
  p.bev_projection = LinearMap::random(config.backbone_widths.back(), config.channels, false, rng);
  p.gman = GmanParams::random(config.channels, config.heads, config.window, rng);
  p.gman.dropout_rate = config.dropout;
  p.gman.depth_scale = config.depth_scale;
  p.gman.dropout_seed = config.model_seed;
  p.asmn = AsmnParams::random(config.channels, rng);
  p.asmn.mode = config.asmn_mode;
  p.asmn.sparsity = config.asmn_sparsity;
  return p;
}

Tensor lidar_features(const PointCloud& cloud, const PipelineConfig& config, const ModelParams& params) {
  const VoxelizeResult vox = voxelize_mean(cloud, config.grid_origin, config.voxel_size, config.grid_dims);
  const std::vector<VoxelGrid> stages = params.backbone.forward(vox.grid);
  const Tensor raster = bev_raster(stages.back(), config.image_height, config.image_width);
  return params.bev_projection.apply(raster);
}

ForwardOutputs run_forward(const PipelineConfig& config, const SyntheticScene& scene, const ModelParams& params) {
  config.validate();
  const std::size_t t = config.sequence_length;
  if (scene.frames.size() < t) {
    throw ValidationError("scene has " + std::to_string(scene.frames.size()) + " frames, sequence_length is " +
                          std::to_string(t));
  }
  const std::size_t h = config.image_height, w = config.image_width;
  ForwardOutputs out;
  LstmState gman_state;
  AsmnState asmn_state = AsmnState::ones(h * w, config.channels);

  for (std::size_t f = 0; f < t; ++f) {
    const SceneFrame& frame = scene.frames[f];
    if (frame.image.shape() != Shape{h, w, 3}) {
      throw ShapeError("frame " + std::to_string(f) + " image " + to_string(frame.image.shape()) +
                       " does not match the configured " + std::to_string(h) + "x" + std::to_string(w));
    }
    FrameOutputs fo;

    Stopwatch sw;
    fo.depth = in_stage("depth", [&] {
      const DepthMap sparse = project_points(frame.cloud, frame.camera);
      // Without any LiDAR return there is nothing to densify; the depth
      // input stays zero.
      return sparse.valid_count() > 0 ? densify_depth(sparse) : DepthMap(sparse.height, sparse.width);
    });
    out.timings.depth += sw.seconds();

    sw = Stopwatch();
    fo.image_features = in_stage("gman", [&] {
      if (!config.use_gman) return gman_embed_only(frame.image, params.gman);
      GmanResult r = gman_forward(frame.image, fo.depth, params.gman, gman_state);
      gman_state = r.state;
      out.gman_states.push_back(std::move(r.state));
      return std::move(r.features);
    });
    out.timings.gman += sw.seconds();

    sw = Stopwatch();
    fo.lidar_features = in_stage("lidar", [&] { return lidar_features(frame.cloud, config, params); });
    fo.keypoints = in_stage("lidar", [&] { return fps_sample(frame.cloud, config.keypoints); });
    out.timings.lidar += sw.seconds();

    sw = Stopwatch();
    fo.fused = in_stage("asmn", [&] {
      if (!config.use_asmn) return fo.image_features;
      AsmnResult r = asmn_step(fo.image_features, fo.lidar_features, params.asmn, asmn_state);
      asmn_state = r.state;
      out.asmn_states.push_back(std::move(r.state));
      return std::move(r.features);
    });
    out.timings.asmn += sw.seconds();

    sw = Stopwatch();
    fo.output = in_stage("kgf", [&] {
      return config.use_kgf ? kgf_fuse(fo.fused, fo.lidar_features, config.kgf) : fo.fused;
    });
    out.timings.kgf += sw.seconds();

    out.frames.push_back(std::move(fo));
  }
  return out;
}

ForwardOutputs run_forward(const PipelineConfig& config, const SyntheticScene& scene) {
  return run_forward(config, scene, ModelParams::random(config));
}

// ---------------------------------------------------------------------------
// Detection providers
// ---------------------------------------------------------------------------

std::vector<Box3D> ProxyScorer::detect(const ProviderInput& input) const {
  if (input.outputs == nullptr || input.outputs->frames.empty()) {
    throw ValidationError("proxy scorer needs forward outputs");
  }
  const std::size_t last = input.outputs->frames.size() - 1;
  const SceneFrame& frame = input.scene.frames.at(last);
  const AppearanceScore appearance(input.outputs->frames[last].output);

  std::vector<Box3D> proposals;
  for (const Box3D& gt : frame.boxes) {
    const double c = std::cos(gt.yaw), s = std::sin(gt.yaw);
    Box3D anchor = gt;
    proposals.push_back(anchor);
    for (const auto& [along, across] : {std::pair{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}}) {
      Box3D d = gt;
      const double ox = along * gt.size[0], oy = across * gt.size[1];
      d.center[0] += c * ox - s * oy;
      d.center[1] += s * ox + c * oy;
      proposals.push_back(d);
    }
  }
  for (Box3D& p : proposals) p.score = appearance(p, frame.camera);

  std::vector<Box3D> refined;
  for (std::size_t idx : nms(proposals, input.config.nms_proposal_iou)) {
    Box3D b = proposals[idx];
    const Support sup = lidar_support(frame.cloud, b, 1.25);
    if (sup.count == 0) continue;
    b.center[0] = sup.cx;
    b.center[1] = sup.cy;
    b.score *= 1.0 - std::exp(-static_cast<double>(sup.count) / 5.0);
    refined.push_back(b);
  }
  std::vector<Box3D> out;
  for (std::size_t idx : nms(refined, input.config.nms_final_iou)) out.push_back(refined[idx]);
  return out;
}

std::string FileDetections::file_name(const std::optional<CellKey>& cell) {
  if (!cell) return "clean.txt";
  return std::string(corruption_name(cell->kind)) + "_s" + std::to_string(cell->severity) + ".txt";
}

std::vector<Box3D> FileDetections::detect(const ProviderInput& input) const {
  const std::filesystem::path path = dir_ / file_name(input.cell);
  if (!std::filesystem::exists(path)) throw ValidationError("missing detections file " + path.string());
  return load_detections(path);
}

// ---------------------------------------------------------------------------
// Robustness sweep
// ---------------------------------------------------------------------------

SyntheticScene corrupt_scene(const SyntheticScene& scene, CorruptionKind kind, int severity, std::uint64_t seed,
                             const SeverityTable& table) {
  SyntheticScene out = scene;
  for (std::size_t f = 0; f < out.frames.size(); ++f) {
    const CorruptionSpec spec{kind, severity, frame_seed(seed, f)};
    SceneFrame& frame = out.frames[f];
    if (is_image_kind(kind)) {
      frame.image = corrupt_image(frame.image, spec, table);
    } else {
      frame.cloud = corrupt_lidar(frame.cloud, spec, table);
    }
  }
  return out;
}

ApResult evaluate_detections(const std::vector<Box3D>& preds, const std::vector<Box3D>& gts,
                             const PipelineConfig& config) {
  std::set<int> classes;
  for (const Box3D& g : gts) classes.insert(g.class_id);
  ApResult total;
  if (classes.empty()) {
    total.no_ground_truth = true;
    return total;
  }
  for (int cls : classes) {
    std::vector<Box3D> p, g;
    std::copy_if(preds.begin(), preds.end(), std::back_inserter(p), [cls](const Box3D& b) { return b.class_id == cls; });
    std::copy_if(gts.begin(), gts.end(), std::back_inserter(g), [cls](const Box3D& b) { return b.class_id == cls; });
    const ApResult r = average_precision(p, g, config.ap_iou, config.ap_mode);
    total.ap += r.ap;
    total.true_positives += r.true_positives;
  }
  total.ap /= static_cast<double>(classes.size());
  return total;
}

bool RobustnessReport::complete() const {
  return !clean_failure && failures.empty() && missing_cells(table, kCorruptionKinds).empty();
}

RobustnessReport run_robustness_suite(const PipelineConfig& config, const SyntheticScene& scene,
                                      const DetectionProvider& provider) {
  config.validate();
  if (scene.frames.size() < config.sequence_length) {
    throw ValidationError("scene is shorter than sequence_length");
  }
  const ModelParams params = ModelParams::random(config);

  std::vector<std::optional<CellKey>> cells{std::nullopt};
  for (CorruptionKind kind : kCorruptionKinds) {
    for (int s = 1; s <= kSeverityLevels; ++s) cells.push_back(CellKey{kind, s});
  }
  struct Outcome {
    double ap = 0.0;
    std::optional<std::string> error;
  };
  std::vector<Outcome> outcomes(cells.size());

  auto evaluate = [&](std::size_t i) {
    try {
      const SyntheticScene corrupted =
          cells[i] ? corrupt_scene(scene, cells[i]->kind, cells[i]->severity, config.corruption_seed, config.severity)
                   : scene;
      std::optional<ForwardOutputs> outputs;
      if (provider.needs_features()) outputs = run_forward(config, corrupted, params);
      const ProviderInput input{config, corrupted, outputs ? &*outputs : nullptr, cells[i]};
      const std::vector<Box3D> preds = provider.detect(input);
      outcomes[i].ap = evaluate_detections(preds, corrupted.frames[config.sequence_length - 1].boxes, config).ap;
    } catch (const std::exception& e) {
      outcomes[i].error = e.what();
    }
  };

  std::size_t workers = config.threads != 0 ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, cells.size());
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < workers; ++k) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) evaluate(i);
      });
    }
  }

  RobustnessReport report;
  report.provider = provider.name();
  report.paper_method = provider.paper_method();
  if (outcomes[0].error) {
    report.clean_failure = outcomes[0].error;
  } else {
    report.table.ap_cln = outcomes[0].ap;
  }
  for (std::size_t i = 1; i < cells.size(); ++i) {
    if (outcomes[i].error) {
      report.failures[*cells[i]] = *outcomes[i].error;
    } else {
      report.table.ap[*cells[i]] = outcomes[i].ap;
    }
  }
  return report;
}

}  // namespace savid
