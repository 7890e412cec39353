#pragma once

#include <span>
#include <vector>

#include "savid/kgf.hpp"
#include "savid/metrics.hpp"
#include "savid/numerics/linear.hpp"
#include "savid/pointcloud.hpp"

// Slow, direct reference implementations used only to check the production
// code. They share no helpers with it.
namespace savid::verify {

/// Triple loop over sites, channels and neighbor sites; neighbors found by
/// scanning the whole raster (knn: full sort by distance, then row-major).
Tensor kgf_oracle(const Tensor& fused, const Tensor& lidar, const KgfOptions& options);

/// Visits every cell of the grid and scans all points for members.
VoxelGrid voxelize_oracle(const PointCloud& cloud, const Vec3& origin, const Vec3& voxel_size,
                          const VoxelIndex& dims);

/// Recomputes every candidate's distance to the selected set from scratch.
std::vector<std::size_t> fps_oracle(const PointCloud& cloud, std::size_t k, std::size_t start_index);

/// Full IoU matrix, then suppression flags.
std::vector<std::size_t> nms_oracle(std::span<const Box3D> boxes, double iou_threshold);

/// IoU from uniform samples over the union's bounding rectangle.
double bev_iou_monte_carlo(const Box3D& a, const Box3D& b, std::size_t samples, Rng& rng);

/// Precision and recall recomputed from scratch for every score cutoff; the
/// interpolated precision at recall r is the best precision over cutoffs
/// reaching r.
double ap_oracle(std::span<const Box3D> preds, std::span<const Box3D> gts, double iou_threshold, ApMode mode);

/// Dense evaluation over every output site of the grid.
VoxelGrid sparse_conv_oracle(const VoxelGrid& grid, const Tensor& kernel, int stride);

}  // namespace savid::verify
