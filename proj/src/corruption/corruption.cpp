#include "savid/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "savid/errors.hpp"

namespace savid {

namespace {

struct KindName {
  CorruptionKind kind;
  std::string_view name;
};

constexpr std::array<KindName, 14> kNames{{
    {CorruptionKind::density_decrease, "density_decrease"},
    {CorruptionKind::cutout, "cutout"},
    {CorruptionKind::crosstalk, "crosstalk"},
    {CorruptionKind::fov_lost, "fov_lost"},
    {CorruptionKind::gaussian_noise_l, "gaussian_noise_l"},
    {CorruptionKind::uniform_noise_l, "uniform_noise_l"},
    {CorruptionKind::impulse_noise_l, "impulse_noise_l"},
    {CorruptionKind::gaussian_noise_i, "gaussian_noise_i"},
    {CorruptionKind::uniform_noise_i, "uniform_noise_i"},
    {CorruptionKind::impulse_noise_i, "impulse_noise_i"},
    {CorruptionKind::snow, "snow"},
    {CorruptionKind::rain, "rain"},
    {CorruptionKind::fog, "fog"},
    {CorruptionKind::sunlight, "sunlight"},
}};

// The severity is deliberately not part of the seed: every level of one
// kind replays the same random draws, which makes the levels nested.
Rng corruption_rng(const CorruptionSpec& spec) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(spec.kind)};
  return Rng(seq);
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  // Explicit Fisher-Yates: std::shuffle's draw pattern is not pinned down.
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
  return perm;
}

std::size_t fraction_count(double fraction, std::size_t n) {
  return std::min(n, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
}

double level(const Schedule& s, int severity) { return s[static_cast<std::size_t>(severity - 1)]; }

void require_kind(const CorruptionSpec& spec, bool lidar) {
  spec.validate();
  if (is_weather_kind(spec.kind)) throw NotImplementedError("not implemented: physics-based weather simulation");
  if (lidar && !is_lidar_kind(spec.kind)) {
    throw ValidationError("corrupt_lidar: " + std::string(corruption_name(spec.kind)) + " is an image corruption");
  }
  if (!lidar && !is_image_kind(spec.kind)) {
    throw ValidationError("corrupt_image: " + std::string(corruption_name(spec.kind)) + " is a LiDAR corruption");
  }
}

PointCloud keep_unmarked(const PointCloud& cloud, const std::vector<char>& drop) {
  PointCloud out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!drop[i]) out.points.push_back(cloud.points[i]);
  }
  return out;
}

void check_fraction(const Schedule& s, const char* name) {
  for (double v : s) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(std::string("severity table: ") + name + " must lie in [0, 1]");
  }
}

void check_rising(const Schedule& s, const char* name) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isfinite(s[i]) || s[i] < 0.0) throw ValidationError(std::string("severity table: ") + name + " must be non-negative");
    if (i > 0 && s[i] < s[i - 1]) throw ValidationError(std::string("severity table: ") + name + " must not decrease with severity");
  }
}

struct ScheduleField {
  const char* key;
  Schedule SeverityTable::*member;
};

struct ScalarField {
  const char* key;
  double SeverityTable::*member;
};

constexpr std::array<ScheduleField, 11> kScheduleFields{{
    {"density_drop_fraction", &SeverityTable::density_drop_fraction},
    {"cutout_spheres", &SeverityTable::cutout_spheres},
    {"crosstalk_fraction", &SeverityTable::crosstalk_fraction},
    {"fov_span_degrees", &SeverityTable::fov_span_degrees},
    {"lidar_gaussian_sigma", &SeverityTable::lidar_gaussian_sigma},
    {"lidar_uniform_bound", &SeverityTable::lidar_uniform_bound},
    {"lidar_impulse_fraction", &SeverityTable::lidar_impulse_fraction},
    {"lidar_impulse_sigma", &SeverityTable::lidar_impulse_sigma},
    {"image_gaussian_sigma", &SeverityTable::image_gaussian_sigma},
    {"image_uniform_bound", &SeverityTable::image_uniform_bound},
    {"image_impulse_fraction", &SeverityTable::image_impulse_fraction},
}};

constexpr std::array<ScalarField, 3> kScalarFields{{
    {"cutout_radius", &SeverityTable::cutout_radius},
    {"crosstalk_sigma", &SeverityTable::crosstalk_sigma},
    {"lidar_impulse_multiplier", &SeverityTable::lidar_impulse_multiplier},
}};

}  // namespace

std::string_view corruption_name(CorruptionKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  throw ValidationError("unknown corruption kind");
}

CorruptionKind parse_corruption_kind(std::string_view name) {
  for (const auto& [k, n] : kNames) {
    if (n == name) return k;
  }
  throw ValidationError("unknown corruption kind '" + std::string(name) + "'");
}

bool is_lidar_kind(CorruptionKind kind) { return kind <= CorruptionKind::impulse_noise_l; }

bool is_image_kind(CorruptionKind kind) {
  return kind >= CorruptionKind::gaussian_noise_i && kind <= CorruptionKind::impulse_noise_i;
}

bool is_weather_kind(CorruptionKind kind) { return kind >= CorruptionKind::snow; }

void CorruptionSpec::validate() const {
  if (severity < 1 || severity > kSeverityLevels) {
    throw ValidationError("severity must be in 1..5, got " + std::to_string(severity));
  }
}

void SeverityTable::validate() const {
  for (const auto& f : kScheduleFields) {
    if (f.member == &SeverityTable::fov_span_degrees) continue;
    check_rising(this->*(f.member), f.key);
  }
  check_fraction(density_drop_fraction, "density_drop_fraction");
  check_fraction(crosstalk_fraction, "crosstalk_fraction");
  check_fraction(lidar_impulse_fraction, "lidar_impulse_fraction");
  check_fraction(image_impulse_fraction, "image_impulse_fraction");
  for (std::size_t i = 0; i < fov_span_degrees.size(); ++i) {
    if (!(fov_span_degrees[i] >= 0.0 && fov_span_degrees[i] <= 360.0)) {
      throw ValidationError("severity table: fov_span_degrees must lie in [0, 360]");
    }
    if (i > 0 && fov_span_degrees[i] > fov_span_degrees[i - 1]) {
      throw ValidationError("severity table: fov_span_degrees must not widen with severity");
    }
  }
  for (double s : cutout_spheres) {
    if (s != std::floor(s)) throw ValidationError("severity table: cutout_spheres must be whole numbers");
  }
  for (const auto& f : kScalarFields) {
    const double v = this->*(f.member);
    if (!(std::isfinite(v) && v >= 0.0)) throw ValidationError(std::string("severity table: ") + f.key + " must be non-negative");
  }
}

SeverityTable SeverityTable::from_yaml(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("severity table: ") + e.what());
  }
  SeverityTable table;
  if (root.IsNull()) return table;
  if (!root.IsMap()) throw ValidationError("severity table: expected a mapping at top level");
  for (const auto& entry : root) {
    const auto key = entry.first.as<std::string>();
    bool known = false;
    try {
      for (const auto& f : kScheduleFields) {
        if (key != f.key) continue;
        known = true;
        const auto values = entry.second.as<std::vector<double>>();
        if (values.size() != kSeverityLevels) {
          throw ValidationError("severity table: " + key + " needs exactly 5 values");
        }
        std::copy(values.begin(), values.end(), (table.*(f.member)).begin());
      }
      for (const auto& f : kScalarFields) {
        if (key != f.key) continue;
        known = true;
        table.*(f.member) = entry.second.as<double>();
      }
    } catch (const YAML::Exception& e) {
      throw ValidationError("severity table: bad value for " + key + ": " + e.what());
    }
    if (!known) throw ValidationError("severity table: unknown key '" + key + "'");
  }
  table.validate();
  return table;
}

SeverityTable SeverityTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read severity table " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_yaml(buf.str());
}

std::string SeverityTable::to_yaml() const {
  YAML::Emitter out;
  out << YAML::BeginMap;
  for (const auto& f : kScheduleFields) {
    const Schedule& s = this->*(f.member);
    out << YAML::Key << f.key << YAML::Value << YAML::Flow << std::vector<double>(s.begin(), s.end());
  }
  for (const auto& f : kScalarFields) out << YAML::Key << f.key << YAML::Value << this->*(f.member);
  out << YAML::EndMap;
  return out.c_str();
}

double azimuth_degrees(const Point& p) { return std::atan2(p.y, p.x) * 180.0 / std::numbers::pi; }

PointCloud corrupt_lidar(const PointCloud& cloud, const CorruptionSpec& spec, const SeverityTable& table) {
  require_kind(spec, true);
  table.validate();
  cloud.validate();
  Rng rng = corruption_rng(spec);
  const int s = spec.severity;
  const std::size_t n = cloud.size();

  switch (spec.kind) {
    case CorruptionKind::density_decrease: {
      const auto perm = permutation(n, rng);
      std::vector<char> drop(n, 0);
      const std::size_t k = fraction_count(level(table.density_drop_fraction, s), n);
      for (std::size_t i = 0; i < k; ++i) drop[perm[i]] = 1;
      return keep_unmarked(cloud, drop);
    }
    case CorruptionKind::cutout: {
      if (n == 0) return cloud;
      // Sphere centers sit on existing points so every sphere bites.
      const auto spheres = static_cast<std::size_t>(level(table.cutout_spheres, s));
      const std::size_t drawn = static_cast<std::size_t>(table.cutout_spheres.back());
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      std::vector<Point> centers;
      for (std::size_t i = 0; i < std::max(drawn, spheres); ++i) centers.push_back(cloud.points[pick(rng)]);
      centers.resize(spheres);
      const double r2 = table.cutout_radius * table.cutout_radius;
      std::vector<char> drop(n, 0);
      for (std::size_t i = 0; i < n; ++i) {
        const Point& p = cloud.points[i];
        for (const Point& c : centers) {
          const double dx = p.x - c.x, dy = p.y - c.y, dz = p.z - c.z;
          if (dx * dx + dy * dy + dz * dz <= r2) {
            drop[i] = 1;
            break;
          }
        }
      }
      return keep_unmarked(cloud, drop);
    }
    case CorruptionKind::fov_lost: {
      const double half = level(table.fov_span_degrees, s) / 2.0;
      PointCloud out;
      for (const Point& p : cloud.points) {
        if (std::abs(azimuth_degrees(p)) <= half) out.points.push_back(p);
      }
      return out;
    }
    case CorruptionKind::crosstalk:
    case CorruptionKind::impulse_noise_l: {
      const bool crosstalk = spec.kind == CorruptionKind::crosstalk;
      const auto perm = permutation(n, rng);
      const std::size_t k = fraction_count(
          level(crosstalk ? table.crosstalk_fraction : table.lidar_impulse_fraction, s), n);
      const std::size_t drawn = fraction_count(
          (crosstalk ? table.crosstalk_fraction : table.lidar_impulse_fraction).back(), n);
      const double mag = crosstalk ? table.crosstalk_sigma
                                   : table.lidar_impulse_multiplier * level(table.lidar_impulse_sigma, s);
      std::normal_distribution<double> normal(0.0, 1.0);
      std::bernoulli_distribution coin(0.5);
      PointCloud out = cloud;
      for (std::size_t i = 0; i < std::max(k, drawn); ++i) {
        std::array<double, 3> d{};
        for (double& v : d) v = crosstalk ? normal(rng) : (coin(rng) ? 1.0 : -1.0);
        if (i >= k) continue;
        Point& p = out.points[perm[i]];
        p.x += mag * d[0];
        p.y += mag * d[1];
        p.z += mag * d[2];
      }
      return out;
    }
    case CorruptionKind::gaussian_noise_l:
    case CorruptionKind::uniform_noise_l: {
      const bool gaussian = spec.kind == CorruptionKind::gaussian_noise_l;
      const double mag = level(gaussian ? table.lidar_gaussian_sigma : table.lidar_uniform_bound, s);
      std::normal_distribution<double> normal(0.0, 1.0);
      std::uniform_real_distribution<double> uniform(-1.0, 1.0);
      auto draw = [&] { return gaussian ? normal(rng) : uniform(rng); };
      PointCloud out = cloud;
      for (Point& p : out.points) {
        p.x += mag * draw();
        p.y += mag * draw();
        p.z += mag * draw();
      }
      return out;
    }
    default:
      break;
  }
  throw ValidationError("corrupt_lidar: unsupported kind");
}

Tensor corrupt_image(const Tensor& image, const CorruptionSpec& spec, const SeverityTable& table) {
  require_kind(spec, false);
  table.validate();
  if (image.rank() != 3 || image.dim(2) != 3) throw ShapeError("corrupt_image expects (H, W, 3), got " + to_string(image.shape()));
  for (double v : image.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("corrupt_image: pixel values must lie in [0, 1]");
  }
  Rng rng = corruption_rng(spec);
  const int s = spec.severity;
  Tensor out = image;

  if (spec.kind == CorruptionKind::impulse_noise_i) {
    const std::size_t pixels = image.dim(0) * image.dim(1);
    const auto perm = permutation(pixels, rng);
    const std::size_t k = fraction_count(level(table.image_impulse_fraction, s), pixels);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < k; ++i) {
      const double v = coin(rng) ? 1.0 : 0.0;
      for (std::size_t c = 0; c < 3; ++c) out[perm[i] * 3 + c] = v;
    }
    return out;
  }

  const bool gaussian = spec.kind == CorruptionKind::gaussian_noise_i;
  const double mag = level(gaussian ? table.image_gaussian_sigma : table.image_uniform_bound, s);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  for (double& v : out.data()) v = std::clamp(v + mag * (gaussian ? normal(rng) : uniform(rng)), 0.0, 1.0);
  return out;
}

}  // namespace savid
