#include "savid/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "savid/errors.hpp"

namespace savid {

namespace {

constexpr double kGroundBand = 0.15;  // points this close to the ground count as ground

struct ObjectTemplate {
  Box3D box;
  double speed = 0.0;  // meters per frame along the heading
  double reflectance = 0.5;
  std::array<double, 3> color{};
};

Box3D moved(const ObjectTemplate& obj, std::size_t frame) {
  Box3D b = obj.box;
  const double step = obj.speed * static_cast<double>(frame);
  b.center[0] += step * std::cos(b.yaw);
  b.center[1] += step * std::sin(b.yaw);
  return b;
}

double bev_distance(const Box3D& b) { return std::hypot(b.center[0], b.center[1]); }

// Uniform over the four sides and the top, shrunk slightly so the points sit
// strictly inside the box; the lowest band above the ground stays empty.
Point surface_point(const Box3D& b, double reflectance, Rng& rng) {
  const double l = b.size[0] * 0.99, w = b.size[1] * 0.99;
  const double bottom = kGroundZ + 0.2;
  const double top = b.center[2] + b.size[2] / 2.0 * 0.99;
  const double h = std::max(top - bottom, 0.05);
  const std::array<double, 5> areas{l * h, l * h, w * h, w * h, l * w};
  std::discrete_distribution<int> face(areas.begin(), areas.end());
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  double lx = 0.0, ly = 0.0, z = 0.0;
  switch (face(rng)) {
    case 0: lx = u(rng) * l; ly = w / 2; z = bottom + (u(rng) + 0.5) * h; break;
    case 1: lx = u(rng) * l; ly = -w / 2; z = bottom + (u(rng) + 0.5) * h; break;
    case 2: lx = l / 2; ly = u(rng) * w; z = bottom + (u(rng) + 0.5) * h; break;
    case 3: lx = -l / 2; ly = u(rng) * w; z = bottom + (u(rng) + 0.5) * h; break;
    default: lx = u(rng) * l; ly = u(rng) * w; z = top; break;
  }
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  return {b.center[0] + c * lx - s * ly, b.center[1] + s * lx + c * ly, z, reflectance};
}

}  // namespace

void SceneOptions::validate() const {
  if (!(range_m > 0.0)) throw ValidationError("scene range must be positive");
  if (frames == 0) throw ValidationError("scene needs at least one frame");
  if (image_height == 0 || image_width == 0) throw ValidationError("image size must be positive");
  if (!(density_constant > 0.0)) throw ValidationError("density constant must be positive");
  if (!(half_azimuth_deg > 0.0 && half_azimuth_deg < 90.0)) throw ValidationError("half azimuth must lie in (0, 90)");
}

std::size_t points_in_box(const PointCloud& cloud, const Box3D& box, double margin) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double hl = margin * box.size[0] / 2.0, hw = margin * box.size[1] / 2.0;
  const double top = box.center[2] + margin * box.size[2] / 2.0;
  std::size_t n = 0;
  for (const Point& p : cloud.points) {
    if (p.z <= kGroundZ + kGroundBand || p.z > top) continue;
    const double dx = p.x - box.center[0], dy = p.y - box.center[1];
    const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
    if (std::abs(lx) <= hl && std::abs(ly) <= hw) ++n;
  }
  return n;
}

Tensor render_image(const CameraModel& camera, const std::vector<Box3D>& boxes,
                    const std::vector<std::array<double, 3>>& colors) {
  if (colors.size() != boxes.size()) throw ValidationError("render_image: one color per box required");
  const std::size_t h = camera.height, w = camera.width;
  Tensor image({h, w, 3});
  for (std::size_t r = 0; r < h; ++r) {
    const double v = static_cast<double>(r) + 0.5;
    std::array<double, 3> rgb{};
    if (v < camera.cy) {
      const double t = v / camera.cy;
      rgb = {0.45 + 0.25 * t, 0.60 + 0.20 * t, 0.85 + 0.05 * t};
    } else {
      const double t = (v - camera.cy) / std::max(1.0, static_cast<double>(h) - camera.cy);
      rgb = {0.30 + 0.15 * t, 0.30 + 0.15 * t, 0.28 + 0.12 * t};
    }
    for (std::size_t c = 0; c < w; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) image[(r * w + c) * 3 + ch] = rgb[ch];
    }
  }

  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return bev_distance(boxes[a]) > bev_distance(boxes[b]); });
  for (std::size_t idx : order) {
    const Box3D& b = boxes[idx];
    const auto corners = b.bev_corners();
    double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
    bool visible = true;
    for (const auto& xy : corners) {
      for (double z : {b.center[2] - b.size[2] / 2.0, b.center[2] + b.size[2] / 2.0}) {
        const Vec3 pc = camera.to_camera({xy[0], xy[1], z});
        if (pc[2] <= 0.1) visible = false;
        if (!visible) break;
        const double u = camera.fx * pc[0] / pc[2] + camera.cx, v = camera.fy * pc[1] / pc[2] + camera.cy;
        umin = std::min(umin, u);
        umax = std::max(umax, u);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
      }
    }
    if (!visible || umax < 0.0 || vmax < 0.0 || umin >= static_cast<double>(w) || vmin >= static_cast<double>(h)) {
      continue;
    }
    const auto c0 = static_cast<std::size_t>(std::max(0.0, std::floor(umin)));
    const auto c1 = static_cast<std::size_t>(std::min(static_cast<double>(w) - 1.0, std::floor(umax)));
    const auto r0 = static_cast<std::size_t>(std::max(0.0, std::floor(vmin)));
    const auto r1 = static_cast<std::size_t>(std::min(static_cast<double>(h) - 1.0, std::floor(vmax)));
    const double fade = 0.6 + 0.4 * std::exp(-bev_distance(b) / 60.0);
    for (std::size_t r = r0; r <= r1; ++r) {
      // lighter towards the top of the box
      const double shade = fade * (1.0 - 0.3 * (static_cast<double>(r - r0) / std::max<double>(1.0, r1 - r0)));
      for (std::size_t c = c0; c <= c1; ++c) {
        for (std::size_t ch = 0; ch < 3; ++ch) image[(r * w + c) * 3 + ch] = std::clamp(colors[idx][ch] * shade, 0.0, 1.0);
      }
    }
  }
  return image;
}

SyntheticScene generate_scene(const SceneOptions& options) {
  options.validate();
  Rng rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double lo = std::min(options.min_range_m, options.range_m / 2.0);
  const double half_az = options.half_azimuth_deg * std::numbers::pi / 180.0;
  std::vector<ObjectTemplate> objects;
  for (std::size_t i = 0; i < options.num_objects; ++i) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < options.placement_attempts && !placed; ++attempt) {
      const double d = std::sqrt(lo * lo + unit(rng) * (options.range_m * options.range_m - lo * lo));
      const double az = (2.0 * unit(rng) - 1.0) * half_az;
      const double x = d * std::cos(az), y = d * std::sin(az);
      placed = std::all_of(objects.begin(), objects.end(), [&](const ObjectTemplate& o) {
        return std::hypot(o.box.center[0] - x, o.box.center[1] - y) >= options.min_separation_m;
      });
      if (!placed) continue;
      ObjectTemplate obj;
      const bool car = unit(rng) < 0.75;
      obj.box.class_id = car ? 0 : 1;
      obj.box.size = car ? Vec3{4.5, 1.9, 1.6} : Vec3{0.8, 0.8, 1.8};
      obj.box.center = {x, y, kGroundZ + obj.box.size[2] / 2.0};
      obj.box.yaw = wrap_angle((2.0 * unit(rng) - 1.0) * std::numbers::pi);
      obj.box.score = 1.0;
      obj.speed = unit(rng) * (car ? 1.0 : 0.3);
      obj.reflectance = 0.3 + 0.6 * unit(rng);
      for (double& ch : obj.color) ch = 0.2 + 0.7 * unit(rng);
      objects.push_back(obj);
    }
    if (!placed) {
      throw ValidationError("cannot place object " + std::to_string(i + 1) + " of " +
                            std::to_string(options.num_objects) + " within " + std::to_string(options.range_m) +
                            " m after " + std::to_string(options.placement_attempts) + " attempts");
    }
  }

  const CameraModel camera = CameraModel::forward_facing(options.image_height, options.image_width,
                                                         options.focal_length, options.camera_position);
  const double r_min = 2.0, r_max = options.range_m + 10.0;
  std::normal_distribution<double> ground_noise(0.0, 0.02);

  SyntheticScene scene;
  for (std::size_t f = 0; f < options.frames; ++f) {
    SceneFrame frame;
    frame.camera = camera;
    // Range density proportional to 1/r: log-uniform radius.
    for (std::size_t i = 0; i < options.ground_points; ++i) {
      const double az = (2.0 * unit(rng) - 1.0) * std::numbers::pi;
      const double r = r_min * std::pow(r_max / r_min, unit(rng));
      frame.cloud.points.push_back({r * std::cos(az), r * std::sin(az), kGroundZ + ground_noise(rng),
                                    0.05 + 0.15 * unit(rng)});
    }
    std::vector<std::array<double, 3>> colors;
    for (const ObjectTemplate& obj : objects) {
      const Box3D b = moved(obj, f);
      const double d = std::max(1.0, bev_distance(b));
      std::poisson_distribution<long> count(options.density_constant / (d * d));
      const long n = std::max<long>(1, count(rng));
      for (long k = 0; k < n; ++k) frame.cloud.points.push_back(surface_point(b, obj.reflectance, rng));
      frame.boxes.push_back(b);
      colors.push_back(obj.color);
    }
    frame.image = render_image(camera, frame.boxes, colors);
    scene.frames.push_back(std::move(frame));
  }
  return scene;
}

SyntheticScene generate_scene(std::uint64_t seed, std::size_t num_objects, double range_m, std::size_t frames) {
  SceneOptions options;
  options.seed = seed;
  options.num_objects = num_objects;
  options.range_m = range_m;
  options.frames = frames;
  return generate_scene(options);
}

}  // namespace savid
