#include "savid/depth.hpp"

#include <cmath>

#include "savid/errors.hpp"
#include "savid/grid_index.hpp"

namespace savid {

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("camera focal lengths must be positive");
  if (height == 0 || width == 0) throw ValidationError("camera image size must be positive");
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += rotation[k][i] * rotation[k][j];
      if (std::abs(dot - (i == j ? 1.0 : 0.0)) > 1e-9) {
        throw ValidationError("camera rotation is not orthonormal");
      }
    }
  }
}

Vec3 CameraModel::to_camera(const Vec3& p) const {
  Vec3 out{};
  for (int i = 0; i < 3; ++i) {
    out[i] = rotation[i][0] * p[0] + rotation[i][1] * p[1] + rotation[i][2] * p[2] + translation[i];
  }
  return out;
}

CameraModel CameraModel::forward_facing(std::size_t height, std::size_t width, double focal, const Vec3& position) {
  CameraModel cam;
  cam.fx = cam.fy = focal;
  cam.cx = static_cast<double>(width) / 2.0;
  cam.cy = static_cast<double>(height) / 2.0;
  // camera x = -y (right), camera y = -z (down), camera z = x (forward)
  cam.rotation = {{{0.0, -1.0, 0.0}, {0.0, 0.0, -1.0}, {1.0, 0.0, 0.0}}};
  for (int i = 0; i < 3; ++i) {
    cam.translation[i] = -(cam.rotation[i][0] * position[0] + cam.rotation[i][1] * position[1] +
                           cam.rotation[i][2] * position[2]);
  }
  cam.height = height;
  cam.width = width;
  return cam;
}

void DepthMap::set(std::size_t row, std::size_t col, double d) {
  const std::size_t i = row * width + col;
  depth[i] = d;
  valid[i] = d > 0.0 ? 1 : 0;
}

std::size_t DepthMap::valid_count() const {
  std::size_t n = 0;
  for (auto v : valid) n += v ? 1 : 0;
  return n;
}

Tensor DepthMap::to_tensor3(double scale) const {
  Tensor out({height, width, 3});
  for (std::size_t i = 0; i < height * width; ++i) {
    for (std::size_t c = 0; c < 3; ++c) out[i * 3 + c] = depth[i] * scale;
  }
  return out;
}

DepthMap project_points(const PointCloud& cloud, const CameraModel& cam) {
  cam.validate();
  DepthMap map(cam.height, cam.width);
  for (const Point& p : cloud.points) {
    const Vec3 c = cam.to_camera({p.x, p.y, p.z});
    if (!(c[2] > 0.0)) continue;
    const double u = std::round(cam.fx * c[0] / c[2] + cam.cx);
    const double v = std::round(cam.fy * c[1] / c[2] + cam.cy);
    if (!(u >= 0.0 && u < static_cast<double>(cam.width) && v >= 0.0 && v < static_cast<double>(cam.height))) {
      continue;
    }
    const auto col = static_cast<std::size_t>(u);
    const auto row = static_cast<std::size_t>(v);
    if (!map.is_valid(row, col) || c[2] < map.at(row, col)) map.set(row, col, c[2]);
  }
  return map;
}

DepthMap densify_depth(const DepthMap& sparse) {
  if (sparse.valid_count() == 0) throw NumericalError("densify_depth: no depth support (no valid pixel)");
  GridIndex index(sparse.height, sparse.width, std::vector<char>(sparse.valid.begin(), sparse.valid.end()));
  DepthMap dense(sparse.height, sparse.width);
  for (std::size_t r = 0; r < sparse.height; ++r) {
    for (std::size_t c = 0; c < sparse.width; ++c) {
      const GridSite site = index.nearest(r, c, 1).front();
      dense.set(r, c, sparse.at(site.row, site.col));
    }
  }
  return dense;
}

}  // namespace savid
