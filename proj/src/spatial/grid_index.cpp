#include "savid/grid_index.hpp"

#include <algorithm>
#include <string>

#include "savid/errors.hpp"

namespace savid {

GridIndex::GridIndex(std::size_t height, std::size_t width, std::vector<char> occupied)
    : height_(height), width_(width), occupied_(std::move(occupied)) {
  if (occupied_.size() != height_ * width_) {
    throw ShapeError("GridIndex: mask has " + std::to_string(occupied_.size()) + " entries, expected " +
                     std::to_string(height_ * width_));
  }
  occupied_count_ = static_cast<std::size_t>(std::count_if(occupied_.begin(), occupied_.end(),
                                                           [](char c) { return c != 0; }));
}

std::vector<GridSite> GridIndex::nearest(std::size_t row, std::size_t col, std::size_t k) const {
  if (row >= height_ || col >= width_) throw ValidationError("GridIndex: query outside the grid");
  struct Candidate {
    long long dist2;
    std::size_t flat;
    bool operator<(const Candidate& o) const { return dist2 != o.dist2 ? dist2 < o.dist2 : flat < o.flat; }
  };
  k = std::min(k, occupied_count_);
  std::vector<Candidate> best;
  if (k == 0) return {};

  const long long r0 = static_cast<long long>(row), c0 = static_cast<long long>(col);
  const long long h = static_cast<long long>(height_), w = static_cast<long long>(width_);
  const long long max_ring = std::max({r0, h - 1 - r0, c0, w - 1 - c0});

  auto consider = [&](long long r, long long c) {
    if (r < 0 || r >= h || c < 0 || c >= w) return;
    const std::size_t flat = static_cast<std::size_t>(r * w + c);
    if (!occupied_[flat]) return;
    const Candidate cand{(r - r0) * (r - r0) + (c - c0) * (c - c0), flat};
    if (best.size() < k) {
      best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
    } else if (cand < best.back()) {
      best.pop_back();
      best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
    }
  };

  for (long long ring = 0; ring <= max_ring; ++ring) {
    if (ring == 0) {
      consider(r0, c0);
    } else {
      for (long long c = c0 - ring; c <= c0 + ring; ++c) {
        consider(r0 - ring, c);
        consider(r0 + ring, c);
      }
      for (long long r = r0 - ring + 1; r <= r0 + ring - 1; ++r) {
        consider(r, c0 - ring);
        consider(r, c0 + ring);
      }
    }
    // Every site beyond this ring is at least (ring + 1) away; equality could
    // still win a row-major tie, so only a strict bound stops the search.
    if (best.size() == k && best.back().dist2 < (ring + 1) * (ring + 1)) break;
  }

  std::vector<GridSite> sites;
  sites.reserve(best.size());
  for (const auto& cand : best) sites.push_back({cand.flat / width_, cand.flat % width_});
  return sites;
}

}  // namespace savid
