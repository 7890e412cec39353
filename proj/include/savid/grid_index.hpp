#pragma once

#include <cstddef>
#include <vector>

namespace savid {

struct GridSite {
  std::size_t row = 0;
  std::size_t col = 0;

  friend bool operator==(const GridSite&, const GridSite&) = default;
};

/// Nearest occupied sites on a dense H x W occupancy mask.
///
/// Queries expand square rings around the query site and stop once no
/// unvisited ring can beat the current k-th candidate. Candidates are ordered
/// by squared Euclidean distance, then by row-major index.
class GridIndex {
 public:
  GridIndex(std::size_t height, std::size_t width, std::vector<char> occupied);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t occupied_count() const { return occupied_count_; }
  bool occupied(std::size_t row, std::size_t col) const { return occupied_[row * width_ + col] != 0; }

  /// Up to k nearest occupied sites to (row, col), closest first.
  std::vector<GridSite> nearest(std::size_t row, std::size_t col, std::size_t k) const;

 private:
  std::size_t height_;
  std::size_t width_;
  std::vector<char> occupied_;
  std::size_t occupied_count_ = 0;
};

}  // namespace savid
