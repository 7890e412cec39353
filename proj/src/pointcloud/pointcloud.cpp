#include "savid/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "savid/errors.hpp"

namespace savid {

void PointCloud::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw ValidationError("point " + std::to_string(i) + " has a non-finite coordinate");
    }
    if (!(p.reflectance >= 0.0 && p.reflectance <= 1.0)) {
      throw ValidationError("point " + std::to_string(i) + " reflectance outside [0, 1]");
    }
  }
}

bool VoxelGrid::contains(const VoxelIndex& idx) const {
  for (int a = 0; a < 3; ++a) {
    if (idx[a] < 0 || idx[a] >= dims[a]) return false;
  }
  return true;
}

VoxelizeResult voxelize_mean(const PointCloud& cloud, const Vec3& origin, const Vec3& voxel_size,
                             const VoxelIndex& dims) {
  for (int a = 0; a < 3; ++a) {
    if (!(voxel_size[a] > 0.0)) throw ValidationError("voxel_size must be positive on every axis");
    if (dims[a] <= 0) throw ValidationError("voxel grid dims must be positive");
  }
  VoxelizeResult result;
  result.grid.origin = origin;
  result.grid.voxel_size = voxel_size;
  result.grid.dims = dims;
  result.grid.feature_dim = 4;

  auto& cells = result.grid.cells;
  for (const Point& p : cloud.points) {
    const double coords[3] = {p.x, p.y, p.z};
    VoxelIndex idx{};
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      const double f = std::floor((coords[a] - origin[a]) / voxel_size[a]);
      if (!(f >= 0.0 && f < static_cast<double>(dims[a]))) {
        inside = false;
        break;
      }
      idx[a] = static_cast<int>(f);
    }
    if (!inside) {
      ++result.dropped;
      continue;
    }
    VoxelCell& cell = cells[idx];
    if (cell.feature.empty()) cell.feature.assign(4, 0.0);
    cell.feature[0] += p.x;
    cell.feature[1] += p.y;
    cell.feature[2] += p.z;
    cell.feature[3] += p.reflectance;
    ++cell.count;
  }
  for (auto& [idx, cell] : cells) {
    for (double& v : cell.feature) v /= static_cast<double>(cell.count);
  }
  return result;
}

std::vector<std::size_t> fps_sample(const PointCloud& cloud, std::size_t k, std::size_t start_index) {
  const std::size_t n = cloud.size();
  if (n == 0 || k == 0) return {};
  if (start_index >= n) {
    throw ValidationError("fps_sample: start_index " + std::to_string(start_index) + " out of range for " +
                          std::to_string(n) + " points");
  }
  const std::size_t count = std::min(k, n);
  std::vector<std::size_t> selected;
  selected.reserve(count);
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  std::size_t current = start_index;
  selected.push_back(current);
  taken[current] = 1;
  while (selected.size() < count) {
    const Point& c = cloud.points[current];
    std::size_t best = n;
    double best_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Point& p = cloud.points[i];
      const double dx = p.x - c.x, dy = p.y - c.y, dz = p.z - c.z;
      min_dist[i] = std::min(min_dist[i], dx * dx + dy * dy + dz * dz);
      // Strict comparison keeps the lowest index on ties; duplicates of a
      // selected point are still eligible, the selected index itself is not.
      if (!taken[i] && min_dist[i] > best_dist) {
        best_dist = min_dist[i];
        best = i;
      }
    }
    current = best;
    selected.push_back(current);
    taken[current] = 1;
  }
  return selected;
}

Tensor random_conv_kernel(std::size_t in_channels, std::size_t out_channels, Rng& rng) {
  const double bound = 1.0 / std::sqrt(27.0 * static_cast<double>(in_channels));
  return uniform_tensor({3, 3, 3, in_channels, out_channels}, -bound, bound, rng);
}

VoxelGrid sparse_conv_downsample(const VoxelGrid& grid, const Tensor& kernel, int stride) {
  if (stride != 1 && stride != 2) {
    throw ValidationError("sparse_conv_downsample: stride must be 1 or 2, got " + std::to_string(stride));
  }
  if (kernel.rank() != 5 || kernel.dim(0) != 3 || kernel.dim(1) != 3 || kernel.dim(2) != 3 ||
      kernel.dim(3) != grid.feature_dim) {
    throw ShapeError("sparse_conv_downsample: kernel " + to_string(kernel.shape()) +
                     " incompatible with feature dim " + std::to_string(grid.feature_dim));
  }
  const std::size_t cin = kernel.dim(3), cout = kernel.dim(4);

  VoxelGrid out;
  out.origin = grid.origin;
  for (int a = 0; a < 3; ++a) {
    out.voxel_size[a] = grid.voxel_size[a] * stride;
    out.dims[a] = (grid.dims[a] + stride - 1) / stride;
  }
  out.feature_dim = cout;

  // Output o sees inputs stride*o + d for d in {-1, 0, 1}.
  std::set<VoxelIndex> active;
  for (const auto& [idx, cell] : grid.cells) {
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dz = -1; dz <= 1; ++dz) {
          const int d[3] = {dx, dy, dz};
          VoxelIndex o{};
          bool ok = true;
          for (int a = 0; a < 3 && ok; ++a) {
            const int num = idx[a] - d[a];
            if (num < 0 || num % stride != 0) ok = false;
            o[a] = num / stride;
          }
          if (ok && out.contains(o)) active.insert(o);
        }
      }
    }
  }

  const double* w = kernel.data().data();
  for (const VoxelIndex& o : active) {
    VoxelCell cell;
    cell.feature.assign(cout, 0.0);
    for (int kx = 0; kx < 3; ++kx) {
      for (int ky = 0; ky < 3; ++ky) {
        for (int kz = 0; kz < 3; ++kz) {
          const VoxelIndex in{stride * o[0] + kx - 1, stride * o[1] + ky - 1, stride * o[2] + kz - 1};
          auto it = grid.cells.find(in);
          if (it == grid.cells.end()) continue;
          cell.count += it->second.count;
          const double* tap = w + ((static_cast<std::size_t>(kx) * 3 + ky) * 3 + kz) * cin * cout;
          const auto& f = it->second.feature;
          for (std::size_t p = 0; p < cin; ++p) {
            const double fp = f[p];
            const double* row = tap + p * cout;
            for (std::size_t q = 0; q < cout; ++q) cell.feature[q] += fp * row[q];
          }
        }
      }
    }
    for (double& v : cell.feature) v = std::max(v, 0.0);
    out.cells.emplace(o, std::move(cell));
  }
  return out;
}

VoxelBackbone VoxelBackbone::random(std::size_t in_channels, const std::vector<std::size_t>& widths, Rng& rng) {
  VoxelBackbone net;
  std::size_t cin = in_channels;
  for (std::size_t w : widths) {
    net.kernels.push_back(random_conv_kernel(cin, w, rng));
    cin = w;
  }
  return net;
}

std::vector<VoxelGrid> VoxelBackbone::forward(const VoxelGrid& input) const {
  std::vector<VoxelGrid> stages;
  stages.reserve(kernels.size());
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    const VoxelGrid& previous = i == 0 ? input : stages.back();
    stages.push_back(sparse_conv_downsample(previous, kernels[i], i == 0 ? 1 : 2));
  }
  return stages;
}

Tensor bev_raster(const VoxelGrid& grid, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ValidationError("bev_raster: raster must be non-empty");
  const std::size_t c = grid.feature_dim;
  Tensor raster({height, width, c});
  const int gx = grid.dims[0], gy = grid.dims[1];
  // Winning z cell per BEV column.
  std::vector<const VoxelCell*> column(static_cast<std::size_t>(gx) * gy, nullptr);
  for (const auto& [idx, cell] : grid.cells) {
    const VoxelCell*& slot = column[static_cast<std::size_t>(idx[0]) * gy + idx[1]];
    // Map iteration visits z in increasing order, so strict > keeps the lowest z.
    if (slot == nullptr || cell.count > slot->count) slot = &cell;
  }
  for (std::size_t u = 0; u < height; ++u) {
    const std::size_t a = u * static_cast<std::size_t>(gx) / height;
    for (std::size_t v = 0; v < width; ++v) {
      const std::size_t b = v * static_cast<std::size_t>(gy) / width;
      const VoxelCell* cell = column[a * gy + b];
      if (cell == nullptr) continue;
      std::copy(cell->feature.begin(), cell->feature.end(), raster.data().begin() + (u * width + v) * c);
    }
  }
  return raster;
}

}  // namespace savid
