#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "savid/errors.hpp"
#include "savid/pointcloud.hpp"
#include "savid/verify/oracles.hpp"

namespace savid {
namespace {

PointCloud random_cloud(std::size_t n, double extent, Rng& rng) {
  std::uniform_real_distribution<double> u(-extent, extent), r(0.0, 1.0);
  PointCloud cloud;
  for (std::size_t i = 0; i < n; ++i) cloud.points.push_back({u(rng), u(rng), u(rng), r(rng)});
  return cloud;
}

double dist(const Point& a, const Point& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

double min_pairwise(const PointCloud& cloud, const std::vector<std::size_t>& idx) {
  double best = INFINITY;
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = i + 1; j < idx.size(); ++j) best = std::min(best, dist(cloud.points[idx[i]], cloud.points[idx[j]]));
  return best;
}

VoxelGrid random_grid(int side, std::size_t channels, double fill, Rng& rng) {
  VoxelGrid g;
  g.dims = {side, side, side};
  g.feature_dim = channels;
  std::uniform_real_distribution<double> u(-1, 1), p(0, 1);
  for (int x = 0; x < side; ++x)
    for (int y = 0; y < side; ++y)
      for (int z = 0; z < side; ++z) {
        if (p(rng) >= fill) continue;
        VoxelCell cell;
        cell.count = 1 + static_cast<int>(p(rng) * 4);
        for (std::size_t c = 0; c < channels; ++c) cell.feature.push_back(u(rng));
        g.cells[{x, y, z}] = cell;
      }
  return g;
}

// ---------------------------------------------------------------------------

TEST(PointCloud, ValidateRejectsBadValues) {
  PointCloud ok{{{1, 2, 3, 0.5}}};
  EXPECT_NO_THROW(ok.validate());
  EXPECT_THROW((PointCloud{{{1, NAN, 3, 0.5}}}).validate(), ValidationError);
  EXPECT_THROW((PointCloud{{{1, 2, 3, 1.5}}}).validate(), ValidationError);
}

TEST(Voxelize, SinglePointIsItsOwnMean) {
  const PointCloud cloud{{{0.5, 0.5, 0.5, 0.2}}};
  const VoxelizeResult r = voxelize_mean(cloud, {0, 0, 0}, {1, 1, 1}, {4, 4, 4});
  ASSERT_EQ(r.grid.cells.size(), 1u);
  const VoxelCell& cell = r.grid.cells.at({0, 0, 0});
  EXPECT_EQ(cell.count, 1);
  EXPECT_EQ(cell.feature, (std::vector<double>{0.5, 0.5, 0.5, 0.2}));
}

TEST(Voxelize, TwoPointMean) {
  const PointCloud cloud{{{0.1, 0.1, 0.1, 0.2}, {0.9, 0.9, 0.9, 0.4}}};
  const VoxelizeResult r = voxelize_mean(cloud, {0, 0, 0}, {1, 1, 1}, {1, 1, 1});
  ASSERT_EQ(r.grid.cells.size(), 1u);
  EXPECT_NEAR(r.grid.cells.begin()->second.feature[3], 0.3, 1e-15);
  EXPECT_EQ(r.grid.cells.begin()->second.count, 2);
}

TEST(Voxelize, MatchesOracleAndConservesPoints) {
  Rng rng(1);
  const PointCloud cloud = random_cloud(1000, 6.0, rng);
  const Vec3 origin{-5, -5, -5}, size{0.7, 0.9, 1.1};
  const VoxelIndex dims{14, 11, 9};
  const VoxelizeResult r = voxelize_mean(cloud, origin, size, dims);
  const VoxelGrid ref = verify::voxelize_oracle(cloud, origin, size, dims);
  ASSERT_EQ(r.grid.cells.size(), ref.cells.size());
  std::size_t total = 0;
  for (const auto& [idx, cell] : r.grid.cells) {
    ASSERT_TRUE(ref.cells.count(idx));
    EXPECT_EQ(cell.count, ref.cells.at(idx).count);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(cell.feature[c], ref.cells.at(idx).feature[c], 1e-12);
    EXPECT_TRUE(r.grid.contains(idx));
    total += static_cast<std::size_t>(cell.count);
  }
  EXPECT_EQ(total + r.dropped, cloud.size());
  EXPECT_GT(r.dropped, 0u);
}

TEST(Voxelize, TranslationKeepsCellStructure) {
  Rng rng(2);
  const PointCloud cloud = random_cloud(300, 4.0, rng);
  PointCloud moved = cloud;
  const Vec3 shift{3.0, -8.0, 16.0};
  for (Point& p : moved.points) {
    p.x += shift[0];
    p.y += shift[1];
    p.z += shift[2];
  }
  const VoxelizeResult a = voxelize_mean(cloud, {-4, -4, -4}, {0.5, 0.5, 0.5}, {16, 16, 16});
  const VoxelizeResult b = voxelize_mean(moved, {-4 + shift[0], -4 + shift[1], -4 + shift[2]}, {0.5, 0.5, 0.5},
                                         {16, 16, 16});
  ASSERT_EQ(a.grid.cells.size(), b.grid.cells.size());
  for (auto ia = a.grid.cells.begin(), ib = b.grid.cells.begin(); ia != a.grid.cells.end(); ++ia, ++ib) {
    EXPECT_EQ(ia->first, ib->first);
    EXPECT_EQ(ia->second.count, ib->second.count);
  }
}

TEST(Voxelize, EmptyCloudAndBadVoxelSize) {
  EXPECT_TRUE(voxelize_mean({}, {0, 0, 0}, {1, 1, 1}, {2, 2, 2}).grid.cells.empty());
  EXPECT_THROW(voxelize_mean({}, {0, 0, 0}, {1, 0, 1}, {2, 2, 2}), ValidationError);
}

TEST(Fps, CollinearPicksFarthest) {
  const PointCloud cloud{{{0, 0, 0, 0}, {1, 0, 0, 0}, {10, 0, 0, 0}}};
  EXPECT_EQ(fps_sample(cloud, 2, 0), (std::vector<std::size_t>{0, 2}));
}

TEST(Fps, KEqualsNIsPermutationFromStart) {
  Rng rng(3);
  const PointCloud cloud = random_cloud(40, 3.0, rng);
  const auto idx = fps_sample(cloud, 40, 17);
  ASSERT_EQ(idx.size(), 40u);
  EXPECT_EQ(idx.front(), 17u);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 40u);
  EXPECT_EQ(fps_sample(cloud, 100, 0).size(), 40u);
}

TEST(Fps, MatchesOracleAndIgnoresReflectance) {
  Rng rng(4);
  PointCloud cloud = random_cloud(200, 5.0, rng);
  const auto idx = fps_sample(cloud, 16, 0);
  EXPECT_EQ(idx, verify::fps_oracle(cloud, 16, 0));
  for (Point& p : cloud.points) p.reflectance = 1.0 - p.reflectance;
  EXPECT_EQ(fps_sample(cloud, 16, 0), idx);
}

TEST(Fps, TiesGoToLowestIndex) {
  // Points 1 and 2 are both 1 m from the start.
  const PointCloud cloud{{{0, 0, 0, 0}, {1, 0, 0, 0}, {-1, 0, 0, 0}}};
  EXPECT_EQ(fps_sample(cloud, 2, 0), (std::vector<std::size_t>{0, 1}));
}

TEST(Fps, MinPairwiseDistanceShrinksWithK) {
  Rng rng(5);
  const PointCloud cloud = random_cloud(150, 5.0, rng);
  double previous = INFINITY;
  for (std::size_t k = 2; k <= 40; ++k) {
    const double d = min_pairwise(cloud, fps_sample(cloud, k, 3));
    EXPECT_LE(d, previous + 1e-12);
    previous = d;
  }
}

TEST(Fps, EmptyCloudAndBadStart) {
  EXPECT_TRUE(fps_sample({}, 4, 0).empty());
  const PointCloud cloud{{{0, 0, 0, 0}}};
  EXPECT_THROW(fps_sample(cloud, 1, 1), ValidationError);
}

TEST(SparseConv, IdentityKernelStrideOne) {
  Rng rng(6);
  const VoxelGrid g = random_grid(5, 3, 0.3, rng);
  Tensor kernel({3, 3, 3, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) kernel.at({1, 1, 1, c, c}) = 1.0;
  const VoxelGrid out = sparse_conv_downsample(g, kernel, 1);
  for (const auto& [idx, cell] : g.cells) {
    ASSERT_TRUE(out.cells.count(idx));
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out.cells.at(idx).feature[c], std::max(cell.feature[c], 0.0));
  }
  // Neighbors of occupied cells are active too; they see only zero taps.
  for (const auto& [idx, cell] : out.cells) {
    if (g.cells.count(idx)) continue;
    for (double v : cell.feature) EXPECT_EQ(v, 0.0);
  }
}

TEST(SparseConv, SingleVoxelStrideTwo) {
  VoxelGrid g;
  g.dims = {8, 8, 8};
  g.feature_dim = 2;
  g.cells[{3, 3, 3}] = VoxelCell{{0.25, 0.5}, 1};
  const Tensor kernel({3, 3, 3, 2, 4}, 1.0);
  const VoxelGrid out = sparse_conv_downsample(g, kernel, 2);
  EXPECT_EQ(out.dims, (VoxelIndex{4, 4, 4}));
  // Input 3 is reached from outputs 1 (offset +1) and 2 (offset -1) per axis.
  ASSERT_EQ(out.cells.size(), 8u);
  for (const auto& [idx, cell] : out.cells) {
    for (int a = 0; a < 3; ++a) EXPECT_TRUE(idx[a] == 1 || idx[a] == 2);
    for (double v : cell.feature) EXPECT_DOUBLE_EQ(v, 0.75);
  }
}

TEST(SparseConv, MatchesDenseOracle) {
  Rng rng(7);
  for (int stride : {1, 2}) {
    const VoxelGrid g = random_grid(8, 4, 0.15, rng);
    const Tensor kernel = random_conv_kernel(4, 5, rng);
    const VoxelGrid out = sparse_conv_downsample(g, kernel, stride);
    const VoxelGrid ref = verify::sparse_conv_oracle(g, kernel, stride);
    ASSERT_EQ(out.cells.size(), ref.cells.size()) << "stride " << stride;
    for (const auto& [idx, cell] : out.cells) {
      ASSERT_TRUE(ref.cells.count(idx));
      for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(cell.feature[c], ref.cells.at(idx).feature[c], 1e-10);
    }
  }
}

TEST(SparseConv, EmptyGridAndErrors) {
  Rng rng(8);
  VoxelGrid g;
  g.dims = {4, 4, 4};
  g.feature_dim = 2;
  EXPECT_TRUE(sparse_conv_downsample(g, random_conv_kernel(2, 3, rng), 2).cells.empty());
  EXPECT_THROW(sparse_conv_downsample(g, random_conv_kernel(2, 3, rng), 3), ValidationError);
  EXPECT_THROW(sparse_conv_downsample(g, random_conv_kernel(5, 3, rng), 1), ShapeError);
}

TEST(Backbone, FourStagesHalveResolution) {
  Rng rng(9);
  const PointCloud cloud = random_cloud(500, 15.0, rng);
  const VoxelGrid g = voxelize_mean(cloud, {-16, -16, -4}, {1, 1, 1}, {32, 32, 8}).grid;
  const VoxelBackbone net = VoxelBackbone::random(4, {16, 32, 64, 64}, rng);
  const auto stages = net.forward(g);
  ASSERT_EQ(stages.size(), 4u);
  EXPECT_EQ(stages[0].dims, (VoxelIndex{32, 32, 8}));
  EXPECT_EQ(stages[1].dims, (VoxelIndex{16, 16, 4}));
  EXPECT_EQ(stages[2].dims, (VoxelIndex{8, 8, 2}));
  EXPECT_EQ(stages[3].dims, (VoxelIndex{4, 4, 1}));
  EXPECT_EQ(stages[3].feature_dim, 64u);
  for (const auto& s : stages)
    for (const auto& [idx, cell] : s.cells)
      for (double v : cell.feature) EXPECT_GE(v, 0.0);
}

TEST(BevRaster, PicksHighestCountAlongZ) {
  VoxelGrid g;
  g.dims = {2, 2, 3};
  g.feature_dim = 1;
  g.cells[{0, 1, 0}] = VoxelCell{{1.0}, 2};
  g.cells[{0, 1, 2}] = VoxelCell{{5.0}, 3};
  g.cells[{1, 0, 0}] = VoxelCell{{7.0}, 1};
  g.cells[{1, 0, 1}] = VoxelCell{{9.0}, 1};
  const Tensor r = bev_raster(g, 4, 4);
  EXPECT_EQ(r.at({0, 2, 0}), 5.0);
  EXPECT_EQ(r.at({1, 3, 0}), 5.0);
  EXPECT_EQ(r.at({2, 0, 0}), 7.0);  // equal counts: lowest z wins
  EXPECT_EQ(r.at({0, 0, 0}), 0.0);
  EXPECT_EQ(r.at({3, 3, 0}), 0.0);
}

}  // namespace
}  // namespace savid
