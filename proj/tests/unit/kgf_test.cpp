#include <gtest/gtest.h>

#include <cmath>

#include "savid/errors.hpp"
#include "savid/kgf.hpp"
#include "savid/numerics/linear.hpp"
#include "savid/verify/oracles.hpp"

namespace savid {
namespace {

// Random map with roughly `density` of its sites carrying non-zero features.
Tensor sparse_lidar(std::size_t h, std::size_t w, std::size_t c, double density, Rng& rng) {
  std::uniform_real_distribution<double> u(0, 1), v(-1, 1);
  Tensor t(Shape{h, w, c});
  for (std::size_t s = 0; s < h * w; ++s) {
    if (u(rng) >= density) continue;
    for (std::size_t ch = 0; ch < c; ++ch) t[s * c + ch] = v(rng);
  }
  return t;
}

TEST(Cosine, PaperForm) {
  const std::vector<double> e0{1, 0, 0}, e1{0, 1, 0}, zero{0, 0, 0};
  EXPECT_NEAR(cosine_paper(e0, e0), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(cosine_paper(e0, e1), 0.0);
  EXPECT_EQ(cosine_paper(zero, zero), 0.0);
  EXPECT_EQ(cosine_paper(zero, e0), 0.0);
}

TEST(Cosine, PaperFormIsHomogeneousOfDegreeOne) {
  Rng rng(4);
  const Tensor a = uniform_tensor(Shape{6}, -1, 1, rng), b = uniform_tensor(Shape{6}, -1, 1, rng);
  std::vector<double> a2(a.data().begin(), a.data().end()), b2(b.data().begin(), b.data().end());
  for (auto& x : a2) x *= 3.0;
  for (auto& x : b2) x *= 3.0;
  EXPECT_NEAR(cosine_paper(a2, b2), 3.0 * cosine_paper(a.data(), b.data()), 1e-12);
}

TEST(Cosine, StandardForm) {
  const std::vector<double> a{1, 2, 2}, b{2, 4, 4}, c{-1, -2, -2}, zero{0, 0, 0};
  EXPECT_NEAR(cosine_standard(a, b), 1.0, 1e-15);
  EXPECT_NEAR(cosine_standard(a, c), -1.0, 1e-15);
  EXPECT_EQ(cosine_standard(zero, zero), 0.0);
  EXPECT_THROW(cosine_standard(a, std::vector<double>{1, 2}), ShapeError);
  EXPECT_EQ(cosine_scalar(2.0, -3.0, CosineMode::standard), -1.0);
  EXPECT_NEAR(cosine_scalar(2.0, 3.0, CosineMode::paper), 6.0 / std::sqrt(13.0), 1e-15);
}

TEST(Neighbors, WindowReturnsSupportedSitesOnly) {
  Tensor lidar(Shape{4, 4, 2});
  lidar.at({0, 0, 1}) = 1.0;
  lidar.at({1, 2, 0}) = -2.0;
  lidar.at({3, 3, 0}) = 5.0;
  const NeighborSpec window;
  EXPECT_EQ(kgf_neighbors(lidar, 1, 1, window), (std::vector<std::size_t>{0, 6}));
  EXPECT_EQ(kgf_neighbors(lidar, 2, 2, window), (std::vector<std::size_t>{6, 15}));
  EXPECT_TRUE(kgf_neighbors(lidar, 3, 0, window).empty());
  EXPECT_THROW(kgf_neighbors(lidar, 4, 0, window), ValidationError);
}

TEST(Neighbors, KnnReachesBeyondTheWindow) {
  Tensor lidar(Shape{5, 5, 1});
  lidar.at({0, 0, 0}) = 1.0;
  lidar.at({4, 4, 0}) = 1.0;
  lidar.at({0, 4, 0}) = 1.0;
  NeighborSpec knn{NeighborMode::knn, 2};
  EXPECT_EQ(kgf_neighbors(lidar, 0, 1, knn), (std::vector<std::size_t>{0, 4}));
  knn.k = 10;
  EXPECT_EQ(kgf_neighbors(lidar, 2, 2, knn).size(), 3u);
  knn.k = 0;
  EXPECT_THROW(kgf_neighbors(lidar, 0, 0, knn), ValidationError);
}

TEST(MinDistance, ZeroWithoutSupport) {
  Rng rng(5);
  const Tensor fused = uniform_tensor(Shape{3, 3, 4}, -1, 1, rng);
  const Tensor lidar(Shape{3, 3, 4});
  EXPECT_EQ(neighbor_min_distance(fused, lidar, 1, 1, {}), std::vector<double>(4, 0.0));
}

TEST(MinDistance, TakesTheMinimumPerChannel) {
  Tensor fused(Shape{1, 3, 1}, 1.0);
  Tensor lidar(Shape{1, 3, 1});
  lidar.at({0, 0, 0}) = 1.0;
  lidar.at({0, 2, 0}) = -1.0;
  const auto v = neighbor_min_distance(fused, lidar, 0, 1, {});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NEAR(v[0], -1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Project, ChannelDiscount) {
  EXPECT_EQ(project_value(std::vector<double>{1.0}), 0.5);
  EXPECT_EQ(project_value(std::vector<double>{0, 0, 1.0}), 0.125);
  EXPECT_EQ(project_value(std::vector<double>{1, 1, 1, 1}), 0.9375);
  EXPECT_EQ(project_value(std::vector<double>{}), 0.0);
}

TEST(KgfFuse, UnitSimilarityAddsOneHalf) {
  // a = b = sqrt(2) gives a.b / sqrt(a^2 + b^2) = 1 at every site.
  const Tensor fused(Shape{4, 5, 1}, std::sqrt(2.0));
  const Tensor out = kgf_fuse(fused, fused);
  for (double x : out.data()) EXPECT_NEAR(x, std::sqrt(2.0) + 0.5, 1e-15);
}

TEST(KgfFuse, ZeroSimilarityIsIdentity) {
  Rng rng(6);
  const Tensor fused = uniform_tensor(Shape{6, 6, 8}, -1, 1, rng);
  EXPECT_EQ(kgf_fuse(fused, Tensor(Shape{6, 6, 8})), fused);
  const Tensor lidar = uniform_tensor(Shape{6, 6, 8}, -1, 1, rng);
  const Tensor zero(Shape{6, 6, 8});
  EXPECT_EQ(kgf_fuse(zero, lidar), zero);
}

TEST(KgfFuse, MatchesOracle) {
  Rng rng(7);
  std::uniform_int_distribution<std::size_t> dim(1, 9), ch(1, 6);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = dim(rng), w = dim(rng), c = ch(rng);
    const Tensor fused = uniform_tensor(Shape{h, w, c}, -2, 2, rng);
    const Tensor lidar = sparse_lidar(h, w, c, density(rng), rng);
    KgfOptions options;
    if (trial % 3 == 1) options.neighbors = {NeighborMode::knn, 1 + static_cast<std::size_t>(trial % 7)};
    if (trial % 2 == 1) options.cosine = CosineMode::standard;
    const Tensor got = kgf_fuse(fused, lidar, options);
    const Tensor want = verify::kgf_oracle(fused, lidar, options);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12) << "trial " << trial;
  }
}

TEST(KgfFuse, OffsetIsBoundedByTheGeometricSeries) {
  Rng rng(8);
  const std::size_t c = 12;
  const Tensor fused = uniform_tensor(Shape{7, 7, c}, -1, 1, rng);
  const Tensor lidar = sparse_lidar(7, 7, c, 0.4, rng);
  const Tensor out = kgf_fuse(fused, lidar, {.cosine = CosineMode::standard});
  const double bound = 1.0 - std::ldexp(1.0, -static_cast<int>(c));
  for (std::size_t s = 0; s < 49; ++s) {
    const double p = out[s * c] - fused[s * c];
    EXPECT_LE(std::abs(p), bound + 1e-12);
    // The offset is shared by every channel of a site.
    for (std::size_t ch = 1; ch < c; ++ch) EXPECT_NEAR(out[s * c + ch] - fused[s * c + ch], p, 1e-12);
  }
}

TEST(KgfFuse, SingleChannelSimilarityIsDiscounted) {
  const std::size_t c = 4;
  Tensor fused(Shape{1, 1, c});
  Tensor lidar(Shape{1, 1, c});
  fused.at({0, 0, 2}) = std::sqrt(2.0);
  lidar.at({0, 0, 2}) = std::sqrt(2.0);
  const Tensor out = kgf_fuse(fused, lidar);
  EXPECT_NEAR(out.at({0, 0, 0}), 0.125, 1e-15);
  EXPECT_NEAR(out.at({0, 0, 2}), std::sqrt(2.0) + 0.125, 1e-15);
}

TEST(KgfFuse, RejectsMismatchedShapes) {
  EXPECT_THROW(kgf_fuse(Tensor(Shape{2, 2, 3}), Tensor(Shape{2, 2, 4})), ShapeError);
  EXPECT_THROW(kgf_fuse(Tensor(Shape{4, 3}), Tensor(Shape{4, 3})), ShapeError);
}

}  // namespace
}  // namespace savid
