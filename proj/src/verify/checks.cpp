#include "savid/verify/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include "savid/asmn.hpp"
#include "savid/corruption.hpp"
#include "savid/gman.hpp"
#include "savid/kgf.hpp"
#include "savid/metrics.hpp"
#include "savid/numerics/grad_check.hpp"
#include "savid/numerics/ops.hpp"
#include "savid/numerics/spectral.hpp"
#include "savid/pipeline.hpp"
#include "savid/verify/oracles.hpp"

namespace savid::verify {

namespace {

constexpr double kGradTolerance = 1e-5;

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Central differences with h = 1e-4: at 1e-6 the difference quotient on
// coordinates with gradients near 1e-7 is dominated by cancellation.
constexpr double kGradStep = 1e-4;

double grad_error(const ScalarFunction& f, const Tensor& x, const Tensor& analytic) {
  return grad_check(f, x, analytic, kGradStep);
}

double weighted_sum(const Tensor& y, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

CheckResult gradient_result(const std::string& name, std::initializer_list<double> errors) {
  const double worst = std::max(errors);
  return {name, worst < kGradTolerance, "max relative error " + sci(worst)};
}

BatchNormParams random_bn(std::size_t c, Rng& rng) {
  BatchNormParams bn = BatchNormParams::identity(c);
  std::uniform_real_distribution<double> u(-0.5, 0.5), pos(0.5, 1.5);
  for (std::size_t i = 0; i < c; ++i) {
    bn.mean[i] = u(rng);
    bn.var[i] = pos(rng);
    bn.gamma[i] = pos(rng);
    bn.beta[i] = u(rng);
  }
  return bn;
}

std::vector<double> random_vector(std::size_t n, double lo, double hi, Rng& rng) {
  return uniform_tensor({n}, lo, hi, rng).values();
}

// --- gradients --------------------------------------------------------------

CheckResult softmax_gradient() {
  Rng rng(11);
  const Tensor x = uniform_tensor({3, 5}, -2.0, 2.0, rng);
  const Tensor w = uniform_tensor({3, 5}, -1.0, 1.0, rng);
  const Tensor analytic = softmax_lastdim_backward(softmax_lastdim(x), w);
  const double err = grad_error([&](const Tensor& p) { return weighted_sum(softmax_lastdim(p), w); }, x, analytic);
  return gradient_result("softmax", {err});
}

CheckResult layer_norm_gradient() {
  Rng rng(12);
  const Tensor x = uniform_tensor({4, 6}, -2.0, 2.0, rng);
  const Tensor w = uniform_tensor({4, 6}, -1.0, 1.0, rng);
  const Tensor gamma = uniform_tensor({6}, 0.5, 1.5, rng);
  const std::vector<double> beta = random_vector(6, -0.5, 0.5, rng);
  const LayerNormGrad g = layer_norm_backward(x, gamma.values(), w);
  const double ex = grad_error(
      [&](const Tensor& p) { return weighted_sum(layer_norm(p, gamma.values(), beta), w); }, x, g.dx);
  const double eg = grad_error(
      [&](const Tensor& p) { return weighted_sum(layer_norm(x, p.values(), beta), w); }, gamma,
      Tensor({6}, g.dgamma));
  return gradient_result("layer_norm", {ex, eg});
}

CheckResult lstm_gradient() {
  Rng rng(13);
  const std::size_t n = 3, cin = 4, c = 5;
  const LstmWeights weights = LstmWeights::random(cin, c, rng);
  const Tensor x = uniform_tensor({n, cin}, -1.0, 1.0, rng);
  const LstmState state{uniform_tensor({n, c}, -1.0, 1.0, rng), uniform_tensor({n, c}, 0.2, 1.5, rng)};
  const Tensor wh = uniform_tensor({n, c}, -1.0, 1.0, rng);
  const Tensor wc = uniform_tensor({n, c}, -1.0, 1.0, rng);
  auto loss = [&](const Tensor& xx, const LstmState& s) {
    const LstmResult r = lstm_step(xx, s, weights);
    return weighted_sum(r.state.h, wh) + weighted_sum(r.state.c, wc);
  };
  const LstmGrad g = lstm_step_backward(x, state, weights, wh, wc);
  const double ex = grad_error([&](const Tensor& p) { return loss(p, state); }, x, g.dx);
  const double eh = grad_error([&](const Tensor& p) { return loss(x, {p, state.c}); }, state.h, g.dh);
  const double ec = grad_error([&](const Tensor& p) { return loss(x, {state.h, p}); }, state.c, g.dc);
  return gradient_result("lstm_step", {ex, eh, ec});
}

CheckResult gma_gradient() {
  Rng rng(14);
  const std::size_t channels = 8, heads = 2, window = 2;
  const GmanParams params = GmanParams::random(channels, heads, window, rng);
  const Tensor image = uniform_tensor({2, 4, channels}, -1.0, 1.0, rng);
  const Tensor depth = uniform_tensor({2, 4, channels}, -1.0, 1.0, rng);
  const LstmState state{uniform_tensor({2, 4, channels}, -0.5, 0.5, rng),
                        uniform_tensor({2, 4, channels}, 0.2, 1.0, rng)};
  const Tensor w = uniform_tensor({2, 4, channels}, -1.0, 1.0, rng);
  const GmaGrad g = gma_backward(image, depth, params, state, w);
  const double ei = grad_error(
      [&](const Tensor& p) { return weighted_sum(gma_forward(p, depth, params, state).output, w); }, image, g.d_image);
  const double ed = grad_error(
      [&](const Tensor& p) { return weighted_sum(gma_forward(image, p, params, state).output, w); }, depth, g.d_depth);
  return gradient_result("gma_forward", {ei, ed});
}

double asmn_gradient_error(AsmnMode mode, bool value_relu, bool value_linear, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t h = 3, w = 3, c = 4;
  AsmnParams params = AsmnParams::random(c, rng);
  params.mode = mode;
  params.sparsity = 0.5;
  params.value_relu = value_relu;
  params.value_linear = value_linear;
  params.bn_qk = random_bn(c, rng);
  params.bn_hidden = random_bn(c, rng);
  const Tensor image = uniform_tensor({h, w, c}, -1.0, 1.0, rng);
  const Tensor lidar = uniform_tensor({h, w, c}, -1.0, 1.0, rng);
  const AsmnState state{uniform_tensor({h * w, c}, 0.2, 1.5, rng), uniform_tensor({h * w, c}, -1.5, 1.5, rng)};
  const Tensor wf = uniform_tensor({h, w, c}, -1.0, 1.0, rng);
  const Tensor wh = uniform_tensor({h * w, c}, -1.0, 1.0, rng);
  const Tensor wc = uniform_tensor({h * w, c}, -1.0, 1.0, rng);
  auto loss = [&](const Tensor& img, const Tensor& lid) {
    const AsmnResult r = asmn_step(img, lid, params, state);
    return weighted_sum(r.features, wf) + weighted_sum(r.state.h, wh) + weighted_sum(r.state.c, wc);
  };
  const AsmnGrad g = asmn_step_backward(image, lidar, params, state, wf, wh, wc);
  const double ei = grad_error([&](const Tensor& p) { return loss(p, lidar); }, image, g.d_image);
  const double el = grad_error([&](const Tensor& p) { return loss(image, p); }, lidar, g.d_lidar);
  return std::max(ei, el);
}

CheckResult asmn_gradient() {
  return gradient_result("asmn_step", {asmn_gradient_error(AsmnMode::attention, true, true, 15),
                                       asmn_gradient_error(AsmnMode::elementwise, true, true, 16),
                                       asmn_gradient_error(AsmnMode::attention, false, false, 17)});
}

// --- oracles ----------------------------------------------------------------

PointCloud random_cloud(std::size_t n, double extent, Rng& rng) {
  std::uniform_real_distribution<double> u(-extent, extent), r(0.0, 1.0);
  PointCloud cloud;
  for (std::size_t i = 0; i < n; ++i) cloud.points.push_back({u(rng), u(rng), u(rng), r(rng)});
  return cloud;
}

Box3D random_box(Rng& rng, double spread) {
  std::uniform_real_distribution<double> pos(-spread, spread), size(0.5, 4.0), yaw(-3.14159, 3.14159), score(0.0, 1.0);
  Box3D b;
  b.center = {pos(rng), pos(rng), 0.0};
  b.size = {size(rng), size(rng), 1.5};
  b.yaw = yaw(rng);
  b.score = score(rng);
  return b;
}

bool same_grid(const VoxelGrid& a, const VoxelGrid& b, double tol, std::string& why) {
  if (a.dims != b.dims || a.feature_dim != b.feature_dim) {
    why = "grid geometry differs";
    return false;
  }
  if (a.cells.size() != b.cells.size()) {
    why = "cell count " + std::to_string(a.cells.size()) + " vs " + std::to_string(b.cells.size());
    return false;
  }
  for (const auto& [idx, cell] : a.cells) {
    const auto it = b.cells.find(idx);
    if (it == b.cells.end() || it->second.count != cell.count) {
      why = "active set or counts differ";
      return false;
    }
    for (std::size_t i = 0; i < cell.feature.size(); ++i) {
      if (std::abs(cell.feature[i] - it->second.feature[i]) > tol) {
        why = "feature differs by " + sci(std::abs(cell.feature[i] - it->second.feature[i]));
        return false;
      }
    }
  }
  return true;
}

CheckResult kgf_oracle_check() {
  Rng rng(21);
  std::uniform_int_distribution<std::size_t> dim(1, 7), chans(1, 6), kk(1, 12);
  std::bernoulli_distribution empty_site(0.3), zero_value(0.1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = dim(rng), w = dim(rng), c = chans(rng);
    Tensor fused = uniform_tensor({h, w, c}, -2.0, 2.0, rng);
    Tensor lidar = uniform_tensor({h, w, c}, -2.0, 2.0, rng);
    for (std::size_t s = 0; s < h * w; ++s) {
      const bool clear = empty_site(rng);
      for (std::size_t ch = 0; ch < c; ++ch) {
        if (clear) lidar[s * c + ch] = 0.0;
        if (zero_value(rng)) fused[s * c + ch] = 0.0;
      }
    }
    KgfOptions opt;
    opt.neighbors.mode = trial % 2 == 0 ? NeighborMode::window3x3 : NeighborMode::knn;
    opt.neighbors.k = kk(rng);
    opt.cosine = trial % 5 == 4 ? CosineMode::standard : CosineMode::paper;
    if (!(kgf_fuse(fused, lidar, opt) == kgf_oracle(fused, lidar, opt))) {
      return {"kgf_fuse", false, "instance " + std::to_string(trial) + " differs from the oracle"};
    }
  }
  return {"kgf_fuse", true, "100 random instances bit-identical"};
}

CheckResult voxelize_oracle_check() {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const PointCloud cloud = random_cloud(300, 4.0, rng);
    const Vec3 origin{-3.0, -3.5, -2.5};
    const Vec3 voxel{0.7, 0.9, 1.1};
    const VoxelIndex dims{9, 7, 5};
    std::string why;
    const VoxelGrid got = voxelize_mean(cloud, origin, voxel, dims).grid;
    if (!same_grid(got, voxelize_oracle(cloud, origin, voxel, dims), 1e-12, why)) {
      return {"voxelize_mean", false, why};
    }
  }
  return {"voxelize_mean", true, "20 random clouds match"};
}

CheckResult fps_oracle_check() {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    PointCloud cloud = random_cloud(120, 3.0, rng);
    // duplicates and a lattice exercise the tie rule
    for (int i = 0; i < 10; ++i) cloud.points.push_back(cloud.points[static_cast<std::size_t>(i)]);
    for (int i = 0; i < 8; ++i) cloud.points.push_back({static_cast<double>(i % 2), static_cast<double>(i / 2 % 2), 0.0, 0.5});
    const std::size_t start = static_cast<std::size_t>(trial) % cloud.size();
    if (fps_sample(cloud, 60, start) != fps_oracle(cloud, 60, start)) {
      return {"fps_sample", false, "selection differs on trial " + std::to_string(trial)};
    }
  }
  return {"fps_sample", true, "20 random clouds select identical indices"};
}

CheckResult nms_oracle_check() {
  Rng rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Box3D> boxes;
    for (int i = 0; i < 50; ++i) boxes.push_back(random_box(rng, 6.0));
    boxes[7].score = boxes[3].score;  // a score tie
    for (double thr : {0.1, 0.5, 0.7}) {
      if (nms(boxes, thr) != nms_oracle(boxes, thr)) return {"nms", false, "kept set differs on trial " + std::to_string(trial)};
    }
  }
  return {"nms", true, "20 sets of 50 boxes at 3 thresholds match"};
}

CheckResult bev_iou_oracle_check() {
  Rng rng(25);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Box3D a = random_box(rng, 1.0);
    const Box3D b = random_box(rng, 1.0);
    worst = std::max(worst, std::abs(bev_iou(a, b) - bev_iou_monte_carlo(a, b, 1000000, rng)));
  }
  return {"bev_iou", worst <= 0.01, "max deviation from 10^6-sample estimate " + sci(worst)};
}

CheckResult ap_oracle_check() {
  // Three ground truths; predictions at ranks 1 and 3 hit, ranks 2 and 4 miss.
  auto square = [](double x, double score) {
    Box3D b;
    b.center = {x, 0.0, 0.0};
    b.size = {2.0, 2.0, 1.0};
    b.score = score;
    return b;
  };
  const std::vector<Box3D> gts{square(0, 1), square(10, 1), square(20, 1)};
  const std::vector<Box3D> preds{square(0, 0.9), square(50, 0.8), square(10, 0.7), square(60, 0.6)};
  // Envelope is 1 up to recall 1/3 and 2/3 up to recall 2/3.
  const double hand101 = (34.0 * 1.0 + 33.0 * (2.0 / 3.0)) / 101.0;
  const double hand_exact = 1.0 / 3.0 + (1.0 / 3.0) * (2.0 / 3.0);
  const double got101 = average_precision(preds, gts, 0.5).ap;
  const double got_exact = average_precision(preds, gts, 0.5, ApMode::exact).ap;
  if (std::abs(got101 - hand101) > 1e-12 || std::abs(got_exact - hand_exact) > 1e-12) {
    return {"average_precision", false, "hand case gives " + sci(got101) + " / " + sci(got_exact)};
  }
  Rng rng(26);
  std::normal_distribution<double> jitter(0.0, 0.4);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Box3D> g, p;
    for (int i = 0; i < 8; ++i) g.push_back(random_box(rng, 15.0));
    for (const Box3D& b : g) {
      Box3D q = b;
      q.center[0] += jitter(rng);
      q.center[1] += jitter(rng);
      q.score = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      p.push_back(q);
    }
    for (int i = 0; i < 5; ++i) p.push_back(random_box(rng, 15.0));
    for (ApMode mode : {ApMode::interp101, ApMode::exact}) {
      const double diff = std::abs(average_precision(p, g, 0.5, mode).ap - ap_oracle(p, g, 0.5, mode));
      if (diff > 1e-12) return {"average_precision", false, "random case differs by " + sci(diff)};
    }
  }
  return {"average_precision", true, "hand-enumerated 3-gt/4-pred case and 30 random cases match"};
}

CheckResult sparse_conv_oracle_check() {
  Rng rng(27);
  std::bernoulli_distribution occupied(0.2);
  std::uniform_int_distribution<int> count(1, 5);
  for (int trial = 0; trial < 10; ++trial) {
    VoxelGrid grid;
    grid.dims = {5 + trial % 3, 6, 4 + trial % 2};
    grid.feature_dim = 3;
    for (int x = 0; x < grid.dims[0]; ++x) {
      for (int y = 0; y < grid.dims[1]; ++y) {
        for (int z = 0; z < grid.dims[2]; ++z) {
          if (!occupied(rng)) continue;
          grid.cells[{x, y, z}] = VoxelCell{random_vector(3, -1.0, 1.0, rng), count(rng)};
        }
      }
    }
    const Tensor kernel = random_conv_kernel(3, 5, rng);
    for (int stride : {1, 2}) {
      std::string why;
      if (!same_grid(sparse_conv_downsample(grid, kernel, stride), sparse_conv_oracle(grid, kernel, stride), 1e-12, why)) {
        return {"sparse_conv_downsample", false, "stride " + std::to_string(stride) + ": " + why};
      }
    }
  }
  return {"sparse_conv_downsample", true, "10 random grids at strides 1 and 2 match the dense evaluation"};
}

// --- invariants -------------------------------------------------------------

CheckResult softmax_sum_check() {
  Rng rng(31);
  const Tensor x = uniform_tensor({50, 17}, -50.0, 50.0, rng);
  const Tensor y = softmax_lastdim(x);
  double worst = 0.0;
  for (std::size_t r = 0; r < 50; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 17; ++c) s += y[r * 17 + c];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return {"softmax_row_sums", worst <= 1e-12, "max |sum - 1| " + sci(worst)};
}

CheckResult fft_round_trip_check() {
  Rng rng(32);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (std::size_t n : {1, 2, 3, 7, 8, 49, 64, 100, 128, 256}) {
    std::vector<Complex> v(n);
    for (auto& z : v) z = {u(rng), u(rng)};
    std::vector<Complex> w = v;
    dft_inplace(w, false);
    dft_inplace(w, true);
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(w[i] - v[i]));
  }
  return {"fft_round_trip", worst <= 1e-9, "max error " + sci(worst)};
}

CheckResult attention_rows_check() {
  Rng rng(33);
  const Tensor q = uniform_tensor({4, 49, 16}, -2.0, 2.0, rng);
  const Tensor k = uniform_tensor({4, 49, 16}, -2.0, 2.0, rng);
  const Tensor v = uniform_tensor({4, 49, 16}, -2.0, 2.0, rng);
  Tensor probs;
  multi_head_attention(q, k, v, 4, Dropout{}, &probs);
  double worst = 0.0;
  bool nonnegative = true;
  const std::size_t n = 49;
  for (std::size_t row = 0; row < probs.size() / n; ++row) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      s += probs[row * n + j];
      nonnegative = nonnegative && probs[row * n + j] >= 0.0;
    }
    worst = std::max(worst, std::abs(s - 1.0));
  }
  // Sparse attention rows: exactly ceil(rho * T) survivors, summing to one.
  const Tensor qs = uniform_tensor({30, 8}, -1.0, 1.0, rng), ks = uniform_tensor({30, 8}, -1.0, 1.0, rng);
  const Tensor sparse = softmax_lastdim(sparse_attention_logits(qs, ks, 0.25));
  bool kept_ok = true;
  for (std::size_t r = 0; r < 30; ++r) {
    double s = 0.0;
    std::size_t kept = 0;
    for (std::size_t j = 0; j < 30; ++j) {
      s += sparse[r * 30 + j];
      kept += sparse[r * 30 + j] > 0.0 ? 1 : 0;
    }
    worst = std::max(worst, std::abs(s - 1.0));
    kept_ok = kept_ok && kept == 8;
  }
  return {"attention_row_stochastic", worst <= 1e-12 && nonnegative && kept_ok,
          "max |row sum - 1| " + sci(worst) + (kept_ok ? "" : ", sparse rows keep the wrong count")};
}

CheckResult kgf_bound_check() {
  Rng rng(34);
  double worst = -1.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c = 1 + static_cast<std::size_t>(trial % 8);
    const Tensor fused = uniform_tensor({5, 5, c}, -3.0, 3.0, rng);
    const Tensor lidar = uniform_tensor({5, 5, c}, -3.0, 3.0, rng);
    const KgfOptions opt;
    for (std::size_t r = 0; r < 5; ++r) {
      for (std::size_t col = 0; col < 5; ++col) {
        const std::vector<double> v = neighbor_min_distance(fused, lidar, r, col, opt);
        double vmax = 0.0;
        for (double x : v) vmax = std::max(vmax, std::abs(x));
        const double bound = (1.0 - std::ldexp(1.0, -static_cast<int>(c))) * vmax;
        worst = std::max(worst, std::abs(project_value(v)) - bound);
      }
    }
  }
  return {"kgf_geometric_bound", worst <= 1e-15, "max excess over bound " + sci(std::max(worst, 0.0))};
}

CheckResult cosine_homogeneity_check() {
  Rng rng(35);
  std::uniform_real_distribution<double> lam(0.1, 10.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> a = random_vector(16, -1.0, 1.0, rng), b = random_vector(16, -1.0, 1.0, rng);
    const double l = lam(rng);
    std::vector<double> la = a, lb = b;
    for (double& x : la) x *= l;
    for (double& x : lb) x *= l;
    worst = std::max(worst, std::abs(cosine_paper(la, lb) - l * cosine_paper(a, b)));
  }
  return {"cosine_paper_homogeneity", worst <= 1e-12, "max deviation " + sci(worst)};
}

double mean_squared_shift(const PointCloud& before, const PointCloud& after) {
  double s = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const Point& a = before.points[i];
    const Point& b = after.points[i];
    s += (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z);
  }
  return before.empty() ? 0.0 : s / static_cast<double>(before.size());
}

double mean_squared_shift(const Tensor& before, const Tensor& after) {
  double s = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) s += (before[i] - after[i]) * (before[i] - after[i]);
  return s / static_cast<double>(before.size());
}

CheckResult corruption_monotonicity_check() {
  const SyntheticScene scene = generate_scene(3, 8, 50.0, 1);
  const PointCloud& cloud = scene.frames.front().cloud;
  const Tensor& image = scene.frames.front().image;
  std::size_t cases = 0;
  for (CorruptionKind kind : kCorruptionKinds) {
    const bool removes = kind == CorruptionKind::density_decrease || kind == CorruptionKind::cutout ||
                         kind == CorruptionKind::fov_lost;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      double previous = removes ? std::numeric_limits<double>::infinity() : -1.0;
      for (int s = 1; s <= kSeverityLevels; ++s) {
        const CorruptionSpec spec{kind, s, seed};
        double measure = 0.0;
        if (is_image_kind(kind)) {
          measure = mean_squared_shift(image, corrupt_image(image, spec));
        } else {
          const PointCloud out = corrupt_lidar(cloud, spec);
          measure = removes ? static_cast<double>(out.size()) : mean_squared_shift(cloud, out);
        }
        const bool ok = removes ? measure <= previous : measure >= previous;
        if (!ok) {
          return {"corruption_monotonicity", false,
                  std::string(corruption_name(kind)) + " seed " + std::to_string(seed) + " weakens at severity " +
                      std::to_string(s)};
        }
        previous = measure;
        ++cases;
      }
    }
  }
  return {"corruption_monotonicity", true, "10 kinds x 20 seeds x 5 severities (" + std::to_string(cases) + " cases)"};
}

}  // namespace

std::vector<CheckResult> gradient_checks() {
  return {softmax_gradient(), layer_norm_gradient(), lstm_gradient(), gma_gradient(), asmn_gradient()};
}

std::vector<CheckResult> oracle_checks() {
  return {kgf_oracle_check(), voxelize_oracle_check(), fps_oracle_check(), nms_oracle_check(),
          bev_iou_oracle_check(), ap_oracle_check(), sparse_conv_oracle_check()};
}

std::vector<CheckResult> metric_arithmetic_checks() {
  std::vector<CheckResult> out;
  const double r = rce(0.3817, 0.2777);
  out.push_back({"rce_published_pair", std::abs(r - 0.2724) <= 0.0005, "rce(0.3817, 0.2777) = " + sci(r)});

  Rng rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    RobustnessTable table;
    table.ap_cln = u(rng);
    double flat = 0.0;
    for (CorruptionKind kind : kCorruptionKinds) {
      for (int s = 1; s <= kSeverityLevels; ++s) {
        const double v = u(rng);
        table.ap[{kind, s}] = v;
        flat += v;
      }
    }
    flat /= static_cast<double>(kCorruptionKinds.size() * kSeverityLevels);
    worst = std::max(worst, std::abs(ap_corr(table) - flat));
  }
  out.push_back({"ap_corr_flat_mean", worst <= 1e-12, "max deviation over 100 random tables " + sci(worst)});
  return out;
}

std::vector<CheckResult> invariant_checks() {
  return {softmax_sum_check(),  fft_round_trip_check(),     attention_rows_check(),
          kgf_bound_check(),    cosine_homogeneity_check(), corruption_monotonicity_check()};
}

std::vector<CheckResult> shape_checks() {
  std::vector<CheckResult> out;
  PipelineConfig config;
  const bool defaults = config.channels == 64 && config.heads == 8 && config.window == 7;

  Rng rng(51);
  const GmanParams gman = GmanParams::random(config.channels, config.heads, config.window, rng);
  const Tensor image = uniform_tensor({config.image_height, config.image_width, 3}, 0.0, 1.0, rng);
  DepthMap depth(config.image_height, config.image_width);
  for (std::size_t r = 0; r < depth.height; ++r) {
    for (std::size_t c = 0; c < depth.width; ++c) depth.set(r, c, 5.0 + static_cast<double>(r + c));
  }
  const Shape expected{config.image_height, config.image_width, 64};
  const Shape got = gman_forward(image, depth, gman, {}).features.shape();
  out.push_back({"gman_forward_shape", defaults && got == expected, "gman_forward -> " + to_string(got)});

  const SyntheticScene scene = generate_scene(config.scene_options());
  const ForwardOutputs full = run_forward(config, scene);
  bool all_frames = full.frames.size() == 7;
  for (const FrameOutputs& f : full.frames) all_frames = all_frames && f.output.shape() == expected;
  out.push_back({"run_forward_shape", all_frames,
                 std::to_string(full.frames.size()) + " frames, F_KGF " + to_string(full.frames.back().output.shape())});
  out.push_back({"lstm_states_t7", full.gman_states.size() == 7 && full.asmn_states.size() == 7,
                 "GMAN " + std::to_string(full.gman_states.size()) + ", ASMN " +
                     std::to_string(full.asmn_states.size()) + " states"});

  PipelineConfig single = config;
  single.sequence_length = 1;
  const ForwardOutputs one = run_forward(single, scene);
  const bool prefix = one.frames.size() == 1 && one.gman_states.size() == 1 && one.asmn_states.size() == 1 &&
                      one.frames[0].output == full.frames[0].output;
  out.push_back({"t1_prefix_of_t7", prefix, prefix ? "t=1 equals frame 1 of t=7" : "t=1 differs from frame 1 of t=7"});
  return out;
}

std::vector<CheckResult> ablation_checks() {
  // The component grid compares single-frame models.
  PipelineConfig base;
  base.sequence_length = 1;
  const SyntheticScene scene = generate_scene(base.scene_options());
  const ModelParams params = ModelParams::random(base);

  struct Run {
    std::string label;
    Tensor output;
  };
  std::vector<Run> runs;
  std::vector<CheckResult> out;
  for (int mask = 0; mask < 8; ++mask) {
    PipelineConfig cfg = base;
    cfg.use_gman = (mask & 4) != 0;
    cfg.use_asmn = (mask & 2) != 0;
    cfg.use_kgf = (mask & 1) != 0;
    const std::string label = std::string(cfg.use_gman ? "G" : "-") + (cfg.use_asmn ? "A" : "-") + (cfg.use_kgf ? "K" : "-");
    try {
      runs.push_back({label, run_forward(cfg, scene, params).frames.back().output});
    } catch (const std::exception& e) {
      out.push_back({"config_" + label, false, e.what()});
    }
  }
  if (!out.empty()) return out;
  double smallest = std::numeric_limits<double>::infinity();
  std::string pair;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (std::size_t j = i + 1; j < runs.size(); ++j) {
      const double d = max_abs_diff(runs[i].output, runs[j].output);
      if (d < smallest) {
        smallest = d;
        pair = runs[i].label + " vs " + runs[j].label;
      }
    }
  }
  out.push_back({"ablation_grid", smallest > 0.0,
                 "8 configurations ran; smallest pairwise max-abs difference " + sci(smallest) + " (" + pair + ")"});
  return out;
}

std::vector<Suite> selftest_suites() {
  return {{"gradients", gradient_checks},
          {"oracles", oracle_checks},
          {"metrics", metric_arithmetic_checks},
          {"invariants", invariant_checks}};
}

}  // namespace savid::verify
