#pragma once

#include <span>
#include <vector>

#include "savid/numerics/tensor.hpp"

namespace savid {

enum class NeighborMode { window3x3, knn };

struct NeighborSpec {
  NeighborMode mode = NeighborMode::window3x3;
  std::size_t k = 9;  // knn mode only

  void validate() const;
};

/// Similarity applied to each (F_S, F_L) channel pair.
///   paper:    a.b / sqrt(|a|^2 + |b|^2)
///   standard: a.b / (|a| |b|)
enum class CosineMode { paper, standard };

/// Both-zero inputs give 0 in either mode.
double cosine_paper(std::span<const double> a, std::span<const double> b);
double cosine_standard(std::span<const double> a, std::span<const double> b);
double cosine_scalar(double a, double b, CosineMode mode);

struct KgfOptions {
  NeighborSpec neighbors;
  CosineMode cosine = CosineMode::paper;
};

/// Neighbor sites of (row, col) that carry LiDAR support (a non-zero F_L
/// cell), in the order they are scanned. window3x3 scans the clipped 3x3
/// window row-major; knn returns the k nearest supported sites by grid
/// distance, ties in row-major order.
std::vector<std::size_t> kgf_neighbors(const Tensor& lidar, std::size_t row, std::size_t col,
                                       const NeighborSpec& spec);

/// Per-channel minimum similarity V(row, col, .) between F_S at (row, col)
/// and F_L over the neighbor sites; zero when no neighbor has support.
std::vector<double> neighbor_min_distance(const Tensor& fused, const Tensor& lidar, std::size_t row,
                                          std::size_t col, const KgfOptions& options);

/// P = sum over channels kappa = 1..C of 2^-kappa V(kappa).
double project_value(std::span<const double> v);

/// out(row, col, kappa) = F_S(row, col, kappa) + P(row, col). Parameter-free.
Tensor kgf_fuse(const Tensor& fused, const Tensor& lidar, const KgfOptions& options = {});

}  // namespace savid
