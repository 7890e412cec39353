#pragma once

#include <cstdint>
#include <vector>

#include "savid/depth.hpp"
#include "savid/metrics.hpp"
#include "savid/numerics/tensor.hpp"
#include "savid/pointcloud.hpp"

namespace savid {

/// World frame is the LiDAR frame: x forward, y left, z up. The ground
/// plane sits at z = kGroundZ.
inline constexpr double kGroundZ = -1.8;

struct SceneFrame {
  PointCloud cloud;
  Tensor image;  // (H, W, 3) in [0, 1]
  std::vector<Box3D> boxes;
  CameraModel camera;

  friend bool operator==(const SceneFrame&, const SceneFrame&) = default;
};

struct SyntheticScene {
  std::vector<SceneFrame> frames;

  friend bool operator==(const SyntheticScene&, const SyntheticScene&) = default;
};

struct SceneOptions {
  std::uint64_t seed = 1;
  std::size_t num_objects = 8;
  double range_m = 50.0;
  std::size_t frames = 7;

  std::size_t image_height = 56;
  std::size_t image_width = 56;
  double focal_length = 28.0;
  Vec3 camera_position{0.0, 0.0, 0.0};

  double min_range_m = 5.0;
  double half_azimuth_deg = 30.0;  // objects are placed inside this wedge
  double min_separation_m = 6.0;   // Poisson-disk radius between object centers
  std::size_t placement_attempts = 1000;
  double density_constant = 20000.0;  // expected object points = K / d^2
  std::size_t ground_points = 4000;

  void validate() const;
};

/// Deterministic in the options. Object points follow a Poisson law with
/// mean K / d^2 (at least one point each); objects move rigidly between
/// frames. Throws ValidationError when the objects cannot be placed.
SyntheticScene generate_scene(const SceneOptions& options);
SyntheticScene generate_scene(std::uint64_t seed, std::size_t num_objects, double range_m, std::size_t frames);

/// Flat-shaded rendering of the boxes over a sky/ground backdrop, far boxes
/// first. `colors` holds one RGB triple per box.
Tensor render_image(const CameraModel& camera, const std::vector<Box3D>& boxes,
                    const std::vector<std::array<double, 3>>& colors);

/// Points of `cloud` inside the box footprint (scaled by `margin`) and above
/// the ground band.
std::size_t points_in_box(const PointCloud& cloud, const Box3D& box, double margin = 1.0);

}  // namespace savid
