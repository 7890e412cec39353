#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "savid/asmn.hpp"
#include "savid/corruption.hpp"
#include "savid/gman.hpp"
#include "savid/kgf.hpp"
#include "savid/metrics.hpp"
#include "savid/pointcloud.hpp"
#include "savid/scene.hpp"

namespace savid {

struct PipelineConfig {
  std::size_t channels = 64;
  std::size_t heads = 8;
  std::size_t window = 7;
  std::size_t keypoints = 256;
  std::size_t sequence_length = 7;
  double dropout = 0.30;
  double depth_scale = 0.01;

  double nms_proposal_iou = 0.7;
  double nms_final_iou = 0.1;
  double ap_iou = 0.5;
  ApMode ap_mode = ApMode::interp101;

  std::size_t image_height = 56;
  std::size_t image_width = 56;
  double focal_length = 28.0;
  Vec3 camera_position{0.0, 0.0, 0.0};

  Vec3 grid_origin{0.0, -32.0, -3.0};
  Vec3 voxel_size{1.0, 1.0, 1.0};
  VoxelIndex grid_dims{64, 64, 8};
  std::vector<std::size_t> backbone_widths{16, 32, 64, 64};

  std::uint64_t model_seed = 7;
  std::uint64_t scene_seed = 1;
  std::uint64_t corruption_seed = 1234;
  std::size_t num_objects = 8;
  double range_m = 50.0;

  AsmnMode asmn_mode = AsmnMode::attention;
  double asmn_sparsity = 0.25;
  KgfOptions kgf;

  bool use_gman = true;
  bool use_asmn = true;
  bool use_kgf = true;

  std::size_t threads = 0;  // 0: one per hardware thread
  SeverityTable severity;

  void validate() const;
  SceneOptions scene_options() const;

  /// Keys present in the YAML override the defaults; unknown keys are
  /// rejected. A `severity_table` key names a file relative to `base_dir`.
  static PipelineConfig from_yaml(const std::string& text, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);

  /// Applies one `key=value` override with the same rules as the file.
  void set(const std::string& key, const std::string& value, const std::filesystem::path& base_dir = {});
};

struct ModelParams {
  VoxelBackbone backbone;
  LinearMap bev_projection;  // backbone width -> C, no bias
  GmanParams gman;
  AsmnParams asmn;

  static ModelParams random(const PipelineConfig& config);
};

struct FrameOutputs {
  DepthMap depth;        // densified
  Tensor image_features;  // F_I (H, W, C)
  Tensor lidar_features;  // F_L (H, W, C)
  Tensor fused;           // F_S (H, W, C)
  Tensor output;          // F_KGF (H, W, C)
  std::vector<std::size_t> keypoints;
};

struct StageTimings {
  double depth = 0.0;
  double gman = 0.0;
  double lidar = 0.0;
  double asmn = 0.0;
  double kgf = 0.0;
};

struct ForwardOutputs {
  std::vector<FrameOutputs> frames;
  std::vector<LstmState> gman_states;
  std::vector<AsmnState> asmn_states;
  StageTimings timings;  // seconds, summed over frames
};

/// F_L for one cloud: voxelize, backbone, BEV raster, projection to C.
Tensor lidar_features(const PointCloud& cloud, const PipelineConfig& config, const ModelParams& params);

/// Runs the first config.sequence_length frames of the scene through depth,
/// GMAN, the LiDAR branch, ASMN and KGF. Errors are rethrown with the stage
/// name prefixed.
ForwardOutputs run_forward(const PipelineConfig& config, const SyntheticScene& scene, const ModelParams& params);
ForwardOutputs run_forward(const PipelineConfig& config, const SyntheticScene& scene);

/// What a detection provider sees for one evaluation cell.
struct ProviderInput {
  const PipelineConfig& config;
  const SyntheticScene& scene;    // corrupted copy for corruption cells
  const ForwardOutputs* outputs;  // null when the provider skips features
  std::optional<CellKey> cell;    // empty for the clean run
};

class DetectionProvider {
 public:
  virtual ~DetectionProvider() = default;
  virtual std::string name() const = 0;
  /// True when the numbers come from the method under study rather than a
  /// stand-in.
  virtual bool paper_method() const { return false; }
  virtual bool needs_features() const = 0;
  /// Detections for the last frame of the sequence.
  virtual std::vector<Box3D> detect(const ProviderInput& input) const = 0;
};

/// Stand-in detection head used only to exercise the metrics harness.
/// Proposals are anchored on the ground-truth boxes plus offset
/// distractors, recentred on the LiDAR points they enclose (no points: no
/// detection) and scored by peak-pooling F_KGF over their image footprint.
class ProxyScorer final : public DetectionProvider {
 public:
  std::string name() const override { return "proxy-scorer"; }
  bool needs_features() const override { return true; }
  std::vector<Box3D> detect(const ProviderInput& input) const override;
};

/// Reads `clean.txt` and `<kind>_s<severity>.txt` from a directory.
class FileDetections final : public DetectionProvider {
 public:
  explicit FileDetections(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::string name() const override { return "detection-files"; }
  bool needs_features() const override { return false; }
  std::vector<Box3D> detect(const ProviderInput& input) const override;
  static std::string file_name(const std::optional<CellKey>& cell);

 private:
  std::filesystem::path dir_;
};

/// Wraps a callable; used for oracle providers in tests.
class CallbackProvider final : public DetectionProvider {
 public:
  using Fn = std::function<std::vector<Box3D>(const ProviderInput&)>;
  CallbackProvider(std::string name, Fn fn, bool needs_features = false)
      : name_(std::move(name)), fn_(std::move(fn)), needs_features_(needs_features) {}
  std::string name() const override { return name_; }
  bool needs_features() const override { return needs_features_; }
  std::vector<Box3D> detect(const ProviderInput& input) const override { return fn_(input); }

 private:
  std::string name_;
  Fn fn_;
  bool needs_features_;
};

/// Applies one corruption to every frame; frame f uses seed
/// corruption_seed mixed with f.
SyntheticScene corrupt_scene(const SyntheticScene& scene, CorruptionKind kind, int severity, std::uint64_t seed,
                             const SeverityTable& table);

/// Mean AP over the classes present in the ground truth of the last frame.
ApResult evaluate_detections(const std::vector<Box3D>& preds, const std::vector<Box3D>& gts,
                             const PipelineConfig& config);

struct RobustnessReport {
  std::string provider;
  bool paper_method = false;
  RobustnessTable table;
  std::optional<std::string> clean_failure;
  std::map<CellKey, std::string> failures;  // cells whose provider failed

  bool complete() const;
  friend bool operator==(const RobustnessReport&, const RobustnessReport&) = default;
};

/// Clean AP, then AP for all ten kinds x five severities, cells evaluated
/// concurrently. A failing cell is recorded and left out of the table.
RobustnessReport run_robustness_suite(const PipelineConfig& config, const SyntheticScene& scene,
                                      const DetectionProvider& provider);

}  // namespace savid
