#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "savid/numerics/tensor.hpp"
#include "savid/pointcloud.hpp"

namespace savid {

using Mat3 = std::array<std::array<double, 3>, 3>;

/// Pinhole camera. A world point p maps to camera coordinates R p + t;
/// column = fx * x / z + cx and row = fy * y / z + cy.
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation{{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
  Vec3 translation{};
  std::size_t height = 1;
  std::size_t width = 1;

  /// Throws ValidationError unless R^T R = I within 1e-9 and fx, fy > 0.
  void validate() const;

  Vec3 to_camera(const Vec3& world) const;

  /// Forward-looking camera mounted at `position` for a sensor frame with x
  /// forward, y left and z up.
  static CameraModel forward_facing(std::size_t height, std::size_t width, double focal, const Vec3& position);

  friend bool operator==(const CameraModel&, const CameraModel&) = default;
};

struct DepthMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> depth;         // meters, 0 where invalid
  std::vector<std::uint8_t> valid;   // 1 where depth > 0

  DepthMap() = default;
  DepthMap(std::size_t h, std::size_t w) : height(h), width(w), depth(h * w, 0.0), valid(h * w, 0) {}

  double at(std::size_t row, std::size_t col) const { return depth[row * width + col]; }
  bool is_valid(std::size_t row, std::size_t col) const { return valid[row * width + col] != 0; }
  void set(std::size_t row, std::size_t col, double d);
  std::size_t valid_count() const;

  /// (H, W, 3) tensor with the depth replicated over the channels, scaled
  /// by `scale`.
  Tensor to_tensor3(double scale = 1.0) const;

  friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

/// Sparse depth map: points behind the camera are discarded, pixels are
/// rounded to the nearest integer, and the nearest surface wins collisions.
DepthMap project_points(const PointCloud& cloud, const CameraModel& cam);

/// Fills every pixel with the depth of its nearest valid pixel (Euclidean,
/// ties to the lower row-major index). Throws NumericalError when the input
/// has no valid pixel.
DepthMap densify_depth(const DepthMap& sparse);

}  // namespace savid
