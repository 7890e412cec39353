#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include "savid/numerics/linear.hpp"
#include "savid/numerics/tensor.hpp"

namespace savid {

struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double reflectance = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct PointCloud {
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  /// Throws ValidationError unless every coordinate is finite and every
  /// reflectance lies in [0, 1].
  void validate() const;

  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

using Vec3 = std::array<double, 3>;
using VoxelIndex = std::array<int, 3>;

struct VoxelCell {
  std::vector<double> feature;
  int count = 0;

  friend bool operator==(const VoxelCell&, const VoxelCell&) = default;
};

/// Sparse voxel grid. Only non-empty cells are stored, keyed by their
/// (x, y, z) index in lexicographic order.
struct VoxelGrid {
  Vec3 origin{};
  Vec3 voxel_size{1.0, 1.0, 1.0};
  VoxelIndex dims{1, 1, 1};
  std::size_t feature_dim = 4;
  std::map<VoxelIndex, VoxelCell> cells;

  bool contains(const VoxelIndex& idx) const;

  friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;
};

struct VoxelizeResult {
  VoxelGrid grid;
  std::size_t dropped = 0;
};

/// Bins points into floor((p - origin) / voxel_size) and stores the mean
/// (x, y, z, reflectance) of each non-empty cell. Points outside `dims` are
/// dropped and tallied.
VoxelizeResult voxelize_mean(const PointCloud& cloud, const Vec3& origin, const Vec3& voxel_size,
                             const VoxelIndex& dims);

/// Greedy farthest point sampling on xyz. Returns min(k, N) indices starting
/// with `start_index`; ties go to the lowest index.
std::vector<std::size_t> fps_sample(const PointCloud& cloud, std::size_t k, std::size_t start_index = 0);

/// Kernel tensor of shape (3, 3, 3, C_in, C_out), indexed by (dx, dy, dz)
/// offsets -1..1 shifted to 0..2.
Tensor random_conv_kernel(std::size_t in_channels, std::size_t out_channels, Rng& rng);

/// Sparse 3x3x3 convolution with zero padding 1, followed by ReLU. An output
/// site is evaluated only if its receptive field touches a non-empty input
/// cell; absent cells contribute zero. Stride 2 halves each dimension with ceiling
/// division. Output counts are the summed point counts over the receptive
/// field.
VoxelGrid sparse_conv_downsample(const VoxelGrid& grid, const Tensor& kernel, int stride);

/// Standard four-stage backbone: stride 1, 2, 2, 2 giving 1x, 2x, 4x and 8x
/// resolutions.
struct VoxelBackbone {
  std::vector<Tensor> kernels;

  static VoxelBackbone random(std::size_t in_channels, const std::vector<std::size_t>& widths, Rng& rng);
  std::vector<VoxelGrid> forward(const VoxelGrid& input) const;
};

/// Scatters a voxel grid onto an (height, width, C) bird's-eye raster. The
/// grid's x axis maps to raster rows and y to columns by nearest-cell
/// lookup; along z the cell with the highest count wins (lowest z on ties).
/// Raster sites over empty columns stay zero.
Tensor bev_raster(const VoxelGrid& grid, std::size_t height, std::size_t width);

}  // namespace savid
