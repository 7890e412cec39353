#include "savid/verify/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace savid::verify {

namespace {

bool has_support(const Tensor& lidar, std::size_t site) {
  const std::size_t c = lidar.dim(2);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (lidar[site * c + ch] != 0.0) return true;
  }
  return false;
}

double similarity(double a, double b, CosineMode mode) {
  if (mode == CosineMode::paper) {
    const double denom = std::sqrt(a * a + b * b);
    return denom == 0.0 ? 0.0 : (a * b) / denom;
  }
  const double denom = std::sqrt(a * a) * std::sqrt(b * b);
  return denom == 0.0 ? 0.0 : (a * b) / denom;
}

bool inside_box(const Box3D& b, double x, double y) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double dx = x - b.center[0], dy = y - b.center[1];
  return std::abs(c * dx + s * dy) <= b.size[0] / 2.0 && std::abs(-s * dx + c * dy) <= b.size[1] / 2.0;
}

}  // namespace

Tensor kgf_oracle(const Tensor& fused, const Tensor& lidar, const KgfOptions& options) {
  const std::size_t h = fused.dim(0), w = fused.dim(1), c = fused.dim(2);
  Tensor out = fused;
  for (std::size_t tau = 0; tau < h; ++tau) {
    for (std::size_t eps = 0; eps < w; ++eps) {
      std::vector<std::size_t> neighbors;
      if (options.neighbors.mode == NeighborMode::window3x3) {
        for (std::size_t xi = 0; xi < h; ++xi) {
          for (std::size_t gamma = 0; gamma < w; ++gamma) {
            const long dr = static_cast<long>(xi) - static_cast<long>(tau);
            const long dc = static_cast<long>(gamma) - static_cast<long>(eps);
            if (std::abs(dr) <= 1 && std::abs(dc) <= 1 && has_support(lidar, xi * w + gamma)) {
              neighbors.push_back(xi * w + gamma);
            }
          }
        }
      } else {
        std::vector<std::pair<long, std::size_t>> all;
        for (std::size_t site = 0; site < h * w; ++site) {
          if (!has_support(lidar, site)) continue;
          const long dr = static_cast<long>(site / w) - static_cast<long>(tau);
          const long dc = static_cast<long>(site % w) - static_cast<long>(eps);
          all.emplace_back(dr * dr + dc * dc, site);
        }
        std::sort(all.begin(), all.end());
        for (std::size_t i = 0; i < std::min(options.neighbors.k, all.size()); ++i) neighbors.push_back(all[i].second);
      }
      double count = 0.0;
      for (std::size_t kappa = 1; kappa <= c; ++kappa) {
        double v = 0.0;
        if (!neighbors.empty()) {
          v = std::numeric_limits<double>::infinity();
          for (std::size_t site : neighbors) {
            v = std::min(v, similarity(fused[(tau * w + eps) * c + kappa - 1], lidar[site * c + kappa - 1],
                                       options.cosine));
          }
        }
        count += v * std::pow(2.0, -static_cast<double>(kappa));
      }
      for (std::size_t kappa = 0; kappa < c; ++kappa) out[(tau * w + eps) * c + kappa] += count;
    }
  }
  return out;
}

VoxelGrid voxelize_oracle(const PointCloud& cloud, const Vec3& origin, const Vec3& voxel_size,
                          const VoxelIndex& dims) {
  VoxelGrid grid;
  grid.origin = origin;
  grid.voxel_size = voxel_size;
  grid.dims = dims;
  grid.feature_dim = 4;
  for (int i = 0; i < dims[0]; ++i) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int k = 0; k < dims[2]; ++k) {
        VoxelCell cell;
        cell.feature.assign(4, 0.0);
        for (const Point& p : cloud.points) {
          if (static_cast<int>(std::floor((p.x - origin[0]) / voxel_size[0])) != i) continue;
          if (static_cast<int>(std::floor((p.y - origin[1]) / voxel_size[1])) != j) continue;
          if (static_cast<int>(std::floor((p.z - origin[2]) / voxel_size[2])) != k) continue;
          cell.feature[0] += p.x;
          cell.feature[1] += p.y;
          cell.feature[2] += p.z;
          cell.feature[3] += p.reflectance;
          ++cell.count;
        }
        if (cell.count == 0) continue;
        for (double& v : cell.feature) v /= cell.count;
        grid.cells[{i, j, k}] = cell;
      }
    }
  }
  return grid;
}

std::vector<std::size_t> fps_oracle(const PointCloud& cloud, std::size_t k, std::size_t start_index) {
  std::vector<std::size_t> selected;
  if (cloud.empty() || k == 0) return selected;
  selected.push_back(start_index);
  while (selected.size() < std::min(k, cloud.size())) {
    double best = -1.0;
    std::size_t best_index = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (std::find(selected.begin(), selected.end(), i) != selected.end()) continue;
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t s : selected) {
        const Point& a = cloud.points[i];
        const Point& b = cloud.points[s];
        nearest = std::min(nearest, (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
      }
      if (nearest > best) {
        best = nearest;
        best_index = i;
      }
    }
    selected.push_back(best_index);
  }
  return selected;
}

std::vector<std::size_t> nms_oracle(std::span<const Box3D> boxes, double iou_threshold) {
  const std::size_t n = boxes.size();
  std::vector<std::vector<double>> iou(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) iou[i][j] = bev_iou(boxes[i], boxes[j]);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return boxes[a].score != boxes[b].score ? boxes[a].score > boxes[b].score : a < b;
  });
  std::vector<char> suppressed(n, 0);
  std::vector<std::size_t> kept;
  for (std::size_t pos = 0; pos < n; ++pos) {
    const std::size_t i = order[pos];
    if (suppressed[i]) continue;
    kept.push_back(i);
    for (std::size_t later = pos + 1; later < n; ++later) {
      if (iou[i][order[later]] > iou_threshold) suppressed[order[later]] = 1;
    }
  }
  return kept;
}

double bev_iou_monte_carlo(const Box3D& a, const Box3D& b, std::size_t samples, Rng& rng) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const Box3D* box : {&a, &b}) {
    for (const auto& c : box->bev_corners()) {
      xmin = std::min(xmin, c[0]);
      xmax = std::max(xmax, c[0]);
      ymin = std::min(ymin, c[1]);
      ymax = std::max(ymax, c[1]);
    }
  }
  std::uniform_real_distribution<double> ux(xmin, xmax), uy(ymin, ymax);
  std::size_t both = 0, either = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double x = ux(rng), y = uy(rng);
    const bool in_a = inside_box(a, x, y), in_b = inside_box(b, x, y);
    both += (in_a && in_b) ? 1 : 0;
    either += (in_a || in_b) ? 1 : 0;
  }
  return either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either);
}

double ap_oracle(std::span<const Box3D> preds, std::span<const Box3D> gts, double iou_threshold, ApMode mode) {
  if (gts.empty()) return 0.0;
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].score != preds[b].score ? preds[a].score > preds[b].score : a < b;
  });
  std::vector<double> precision, recall;
  for (std::size_t cutoff = 1; cutoff <= order.size(); ++cutoff) {
    std::vector<char> used(gts.size(), 0);
    std::size_t tp = 0;
    for (std::size_t pos = 0; pos < cutoff; ++pos) {
      std::size_t pick = gts.size();
      double best = 0.0;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        const double iou = bev_iou(preds[order[pos]], gts[g]);
        if (!used[g] && iou >= iou_threshold && (pick == gts.size() || iou > best)) {
          pick = g;
          best = iou;
        }
      }
      if (pick < gts.size()) {
        used[pick] = 1;
        ++tp;
      }
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(cutoff));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
  }
  auto best_precision_from = [&](double r) {
    double p = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i) {
      if (recall[i] >= r) p = std::max(p, precision[i]);
    }
    return p;
  };
  if (mode == ApMode::interp101) {
    double sum = 0.0;
    for (int k = 0; k <= 100; ++k) sum += best_precision_from(k / 100.0);
    return sum / 101.0;
  }
  // Area under the envelope: each recall step weighted by the envelope there.
  double area = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    if (recall[i] > prev) {
      area += (recall[i] - prev) * best_precision_from(recall[i]);
      prev = recall[i];
    }
  }
  return area;
}

VoxelGrid sparse_conv_oracle(const VoxelGrid& grid, const Tensor& kernel, int stride) {
  const std::size_t cin = kernel.dim(3), cout = kernel.dim(4);
  VoxelGrid out;
  out.origin = grid.origin;
  out.feature_dim = cout;
  for (int a = 0; a < 3; ++a) {
    out.voxel_size[a] = grid.voxel_size[a] * stride;
    out.dims[a] = (grid.dims[a] + stride - 1) / stride;
  }
  // Dense copy of the input, zero where empty.
  const auto [dx, dy, dz] = grid.dims;
  std::vector<double> dense(static_cast<std::size_t>(dx) * dy * dz * cin, 0.0);
  std::vector<int> counts(static_cast<std::size_t>(dx) * dy * dz, 0);
  std::vector<char> present(counts.size(), 0);
  for (const auto& [idx, cell] : grid.cells) {
    const std::size_t flat = (static_cast<std::size_t>(idx[0]) * dy + idx[1]) * dz + idx[2];
    present[flat] = 1;
    counts[flat] = cell.count;
    for (std::size_t p = 0; p < cin; ++p) dense[flat * cin + p] = cell.feature[p];
  }
  for (int ox = 0; ox < out.dims[0]; ++ox) {
    for (int oy = 0; oy < out.dims[1]; ++oy) {
      for (int oz = 0; oz < out.dims[2]; ++oz) {
        VoxelCell cell;
        cell.feature.assign(cout, 0.0);
        bool touched = false;
        for (int kx = 0; kx < 3; ++kx) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kz = 0; kz < 3; ++kz) {
              const int ix = stride * ox + kx - 1, iy = stride * oy + ky - 1, iz = stride * oz + kz - 1;
              if (ix < 0 || iy < 0 || iz < 0 || ix >= dx || iy >= dy || iz >= dz) continue;
              const std::size_t flat = (static_cast<std::size_t>(ix) * dy + iy) * dz + iz;
              if (!present[flat]) continue;
              touched = true;
              cell.count += counts[flat];
              for (std::size_t p = 0; p < cin; ++p) {
                for (std::size_t q = 0; q < cout; ++q) {
                  cell.feature[q] += dense[flat * cin + p] * kernel.at({static_cast<std::size_t>(kx),
                                                                        static_cast<std::size_t>(ky),
                                                                        static_cast<std::size_t>(kz), p, q});
                }
              }
            }
          }
        }
        if (!touched) continue;
        for (double& v : cell.feature) v = std::max(0.0, v);
        out.cells[{ox, oy, oz}] = cell;
      }
    }
  }
  return out;
}

}  // namespace savid::verify
