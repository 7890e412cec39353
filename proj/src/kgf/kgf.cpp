#include "savid/kgf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "savid/errors.hpp"
#include "savid/grid_index.hpp"

namespace savid {

namespace {

void check_inputs(const Tensor& fused, const Tensor& lidar) {
  if (fused.rank() != 3 || fused.shape() != lidar.shape()) {
    throw ShapeError("KGF expects F_S and F_L of equal (H, W, C) shape, got " + to_string(fused.shape()) + " and " +
                     to_string(lidar.shape()));
  }
}

std::vector<char> support_mask(const Tensor& lidar) {
  const std::size_t sites = lidar.dim(0) * lidar.dim(1), c = lidar.dim(2);
  std::vector<char> mask(sites, 0);
  for (std::size_t s = 0; s < sites; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      if (lidar[s * c + ch] != 0.0) {
        mask[s] = 1;
        break;
      }
    }
  }
  return mask;
}

std::vector<std::size_t> window_sites(const std::vector<char>& mask, std::size_t h, std::size_t w, std::size_t row,
                                      std::size_t col) {
  std::vector<std::size_t> out;
  const std::size_t r0 = row == 0 ? 0 : row - 1, r1 = std::min(h - 1, row + 1);
  const std::size_t c0 = col == 0 ? 0 : col - 1, c1 = std::min(w - 1, col + 1);
  for (std::size_t r = r0; r <= r1; ++r) {
    for (std::size_t c = c0; c <= c1; ++c) {
      if (mask[r * w + c]) out.push_back(r * w + c);
    }
  }
  return out;
}

// Shared by kgf_fuse, which builds the grid index once per call.
std::vector<double> min_distance_at(const Tensor& fused, const Tensor& lidar, const std::vector<std::size_t>& sites,
                                    std::size_t row, std::size_t col, CosineMode mode) {
  const std::size_t w = fused.dim(1), c = fused.dim(2);
  std::vector<double> v(c, 0.0);
  if (sites.empty()) return v;
  const std::size_t centre = (row * w + col) * c;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s : sites) best = std::min(best, cosine_scalar(fused[centre + ch], lidar[s * c + ch], mode));
    v[ch] = best;
  }
  return v;
}

}  // namespace

void NeighborSpec::validate() const {
  if (mode == NeighborMode::knn && k == 0) throw ValidationError("knn neighbor count must be positive");
}

double cosine_paper(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_paper: vectors differ in length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na + nb);
  return denom == 0.0 ? 0.0 : dot / denom;
}

double cosine_standard(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_standard: vectors differ in length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  return denom == 0.0 ? 0.0 : dot / denom;
}

double cosine_scalar(double a, double b, CosineMode mode) {
  return mode == CosineMode::paper ? cosine_paper(std::span(&a, 1), std::span(&b, 1))
                                   : cosine_standard(std::span(&a, 1), std::span(&b, 1));
}

std::vector<std::size_t> kgf_neighbors(const Tensor& lidar, std::size_t row, std::size_t col,
                                       const NeighborSpec& spec) {
  spec.validate();
  if (lidar.rank() != 3) throw ShapeError("kgf_neighbors: F_L must be (H, W, C)");
  const std::size_t h = lidar.dim(0), w = lidar.dim(1);
  if (row >= h || col >= w) throw ValidationError("kgf_neighbors: site out of bounds");
  std::vector<char> mask = support_mask(lidar);
  if (spec.mode == NeighborMode::window3x3) return window_sites(mask, h, w, row, col);
  GridIndex index(h, w, std::move(mask));
  std::vector<std::size_t> out;
  for (const GridSite& s : index.nearest(row, col, spec.k)) out.push_back(s.row * w + s.col);
  return out;
}

std::vector<double> neighbor_min_distance(const Tensor& fused, const Tensor& lidar, std::size_t row,
                                          std::size_t col, const KgfOptions& options) {
  check_inputs(fused, lidar);
  return min_distance_at(fused, lidar, kgf_neighbors(lidar, row, col, options.neighbors), row, col, options.cosine);
}

double project_value(std::span<const double> v) {
  double p = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) p += std::ldexp(v[k], -static_cast<int>(k + 1));
  return p;
}

Tensor kgf_fuse(const Tensor& fused, const Tensor& lidar, const KgfOptions& options) {
  check_inputs(fused, lidar);
  options.neighbors.validate();
  const std::size_t h = fused.dim(0), w = fused.dim(1), c = fused.dim(2);
  std::vector<char> mask = support_mask(lidar);
  const bool knn = options.neighbors.mode == NeighborMode::knn;
  const GridIndex index(h, w, knn ? mask : std::vector<char>(h * w, 0));
  Tensor out = fused;
  std::vector<std::size_t> sites;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t col = 0; col < w; ++col) {
      if (knn) {
        sites.clear();
        for (const GridSite& s : index.nearest(r, col, options.neighbors.k)) sites.push_back(s.row * w + s.col);
      } else {
        sites = window_sites(mask, h, w, r, col);
      }
      const double p = project_value(min_distance_at(fused, lidar, sites, r, col, options.cosine));
      for (std::size_t ch = 0; ch < c; ++ch) out[(r * w + col) * c + ch] += p;
    }
  }
  return out;
}

}  // namespace savid
