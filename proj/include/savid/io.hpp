#pragma once

#include <filesystem>

#include "savid/numerics/tensor.hpp"
#include "savid/pointcloud.hpp"

namespace savid {

// Point cloud file: "SVPC", u32 count, then count records of little-endian
// float32 x, y, z, reflectance.
void save_point_cloud(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud load_point_cloud(const std::filesystem::path& path);

// Tensor file: "SVTN", u32 rank, rank u32 dims, then the row-major data as
// little-endian float32.
void save_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace savid
