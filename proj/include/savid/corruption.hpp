#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "savid/numerics/tensor.hpp"
#include "savid/pointcloud.hpp"

namespace savid {

enum class CorruptionKind {
  density_decrease,
  cutout,
  crosstalk,
  fov_lost,
  gaussian_noise_l,
  uniform_noise_l,
  impulse_noise_l,
  gaussian_noise_i,
  uniform_noise_i,
  impulse_noise_i,
  // Reserved; corrupting with these throws NotImplementedError.
  snow,
  rain,
  fog,
  sunlight,
};

/// The ten implemented kinds, LiDAR first.
inline constexpr std::array<CorruptionKind, 10> kCorruptionKinds{
    CorruptionKind::density_decrease, CorruptionKind::cutout,          CorruptionKind::crosstalk,
    CorruptionKind::fov_lost,         CorruptionKind::gaussian_noise_l, CorruptionKind::uniform_noise_l,
    CorruptionKind::impulse_noise_l,  CorruptionKind::gaussian_noise_i, CorruptionKind::uniform_noise_i,
    CorruptionKind::impulse_noise_i,
};

inline constexpr int kSeverityLevels = 5;

std::string_view corruption_name(CorruptionKind kind);
/// Throws ValidationError for an unknown name. Weather names parse.
CorruptionKind parse_corruption_kind(std::string_view name);
bool is_lidar_kind(CorruptionKind kind);
bool is_image_kind(CorruptionKind kind);
bool is_weather_kind(CorruptionKind kind);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::density_decrease;
  int severity = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

using Schedule = std::array<double, kSeverityLevels>;

/// Per-severity magnitudes of every corruption. Index s-1 holds severity s.
struct SeverityTable {
  Schedule density_drop_fraction{0.1, 0.2, 0.3, 0.4, 0.5};
  Schedule cutout_spheres{1, 2, 3, 4, 5};
  double cutout_radius = 2.0;
  Schedule crosstalk_fraction{0.006, 0.012, 0.018, 0.024, 0.030};
  double crosstalk_sigma = 3.0;
  Schedule fov_span_degrees{300, 240, 180, 120, 60};
  Schedule lidar_gaussian_sigma{0.02, 0.04, 0.06, 0.08, 0.10};
  Schedule lidar_uniform_bound{0.02, 0.04, 0.06, 0.08, 0.10};
  Schedule lidar_impulse_fraction{0.01, 0.02, 0.03, 0.04, 0.05};
  Schedule lidar_impulse_sigma{0.02, 0.04, 0.06, 0.08, 0.10};
  double lidar_impulse_multiplier = 5.0;
  Schedule image_gaussian_sigma{0.04, 0.06, 0.08, 0.09, 0.10};
  Schedule image_uniform_bound{0.04, 0.06, 0.08, 0.09, 0.10};
  Schedule image_impulse_fraction{0.01, 0.02, 0.03, 0.05, 0.07};

  /// Throws ValidationError on out-of-range values or a schedule that
  /// weakens as severity rises.
  void validate() const;

  /// Keys present in the YAML text override the defaults; unknown keys are
  /// rejected.
  static SeverityTable from_yaml(const std::string& text);
  static SeverityTable load(const std::filesystem::path& path);
  std::string to_yaml() const;

  friend bool operator==(const SeverityTable&, const SeverityTable&) = default;
};

/// Deterministic in (cloud, spec, table). Within one seed a higher severity
/// removes or perturbs a superset of what a lower one does.
PointCloud corrupt_lidar(const PointCloud& cloud, const CorruptionSpec& spec, const SeverityTable& table = {});

/// image is (H, W, 3) with values in [0, 1]; the output is clamped to [0, 1].
Tensor corrupt_image(const Tensor& image, const CorruptionSpec& spec, const SeverityTable& table = {});

/// Azimuth atan2(y, x) in degrees, (-180, 180].
double azimuth_degrees(const Point& p);

}  // namespace savid
