#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "savid/errors.hpp"
#include "savid/numerics/grad_check.hpp"
#include "savid/numerics/linear.hpp"
#include "savid/numerics/ops.hpp"
#include "savid/numerics/spectral.hpp"
#include "savid/numerics/tensor.hpp"

namespace savid {
namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      out[i * n + j] = s;
    }
  return out;
}

std::vector<Complex> naive_dft(const std::vector<Complex>& x, bool inverse) {
  const std::size_t n = x.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double phase = sign * 2.0 * M_PI * static_cast<double>(j * k) / static_cast<double>(n);
      s += x[j] * std::polar(1.0, phase);
    }
    out[k] = inverse ? s / static_cast<double>(n) : s;
  }
  return out;
}

// ---------------------------------------------------------------------------

TEST(Tensor, RejectsZeroDimsAndMismatchedData) {
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor({2, 3}).reshaped({4}), ShapeError);
}

TEST(Tensor, IndexingIsRowMajor) {
  Tensor t({2, 3});
  t.at({1, 2}) = 7.0;
  EXPECT_EQ(t[5], 7.0);
  EXPECT_THROW(t.at({2, 0}), ShapeError);
}

TEST(Matmul, IdentityAndHandArithmetic) {
  EXPECT_EQ(matmul(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{3, 4}, {5, 6}})),
            Tensor::matrix({{3, 4}, {5, 6}}));
  EXPECT_EQ(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})), Tensor::matrix({{11}}));
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(1);
  const Tensor a = uniform_tensor({4, 5}, -1, 1, rng);
  const Tensor b = uniform_tensor({5, 3}, -1, 1, rng);
  EXPECT_LE(max_abs_diff(matmul(a, b), naive_matmul(a, b)), 1e-12);
}

TEST(Matmul, BatchedSlicesAreIndependent) {
  Rng rng(2);
  const Tensor a = uniform_tensor({2, 3, 4}, -1, 1, rng);
  const Tensor b = uniform_tensor({2, 4, 2}, -1, 1, rng);
  const Tensor c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 3, 2}));
  for (std::size_t s = 0; s < 2; ++s) {
    const Tensor as({3, 4}, {a.values().begin() + s * 12, a.values().begin() + (s + 1) * 12});
    const Tensor bs({4, 2}, {b.values().begin() + s * 8, b.values().begin() + (s + 1) * 8});
    const Tensor ref = naive_matmul(as, bs);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(c[s * 6 + i], ref[i], 1e-12);
  }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor({2, 3}), Tensor({4, 2}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(4, 2)"), std::string::npos) << msg;
  }
}

TEST(Matmul, Associativity) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor a = uniform_tensor({3, 4}, -1, 1, rng);
    const Tensor b = uniform_tensor({4, 5}, -1, 1, rng);
    const Tensor c = uniform_tensor({5, 2}, -1, 1, rng);
    EXPECT_LE(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))), 1e-9);
  }
}

TEST(Softmax, Examples) {
  const Tensor u = softmax_lastdim(Tensor::vector({0, 0, 0}));
  for (double v : u.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  const Tensor r = softmax_lastdim(Tensor::vector({0, std::log(3.0)}));
  EXPECT_NEAR(r[0], 0.25, 1e-15);
  EXPECT_NEAR(r[1], 0.75, 1e-15);
  const Tensor big = softmax_lastdim(Tensor::vector({1000, 1000}));
  EXPECT_EQ(big[0], 0.5);
  EXPECT_EQ(big[1], 0.5);
}

TEST(Softmax, RowsSumToOneAndPermutationEquivariant) {
  Rng rng(4);
  const Tensor x = uniform_tensor({20, 7}, -30, 30, rng);
  const Tensor y = softmax_lastdim(x);
  for (std::size_t r = 0; r < 20; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      EXPECT_GE(y[r * 7 + c], 0.0);
      s += y[r * 7 + c];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
  Tensor xp = x;
  for (std::size_t r = 0; r < 20; ++r)
    for (std::size_t c = 0; c < 7; ++c) xp[r * 7 + c] = x[r * 7 + perm[c]];
  const Tensor yp = softmax_lastdim(xp);
  for (std::size_t r = 0; r < 20; ++r)
    for (std::size_t c = 0; c < 7; ++c) EXPECT_NEAR(yp[r * 7 + c], y[r * 7 + perm[c]], 1e-15 * y[r * 7 + perm[c]]);
}

TEST(LayerNorm, Examples) {
  const std::vector<double> one3(3, 1.0), zero3(3, 0.0);
  const Tensor c = layer_norm(Tensor::vector({5, 5, 5}), one3, zero3);
  for (double v : c.values()) EXPECT_EQ(v, 0.0);

  const std::vector<double> one2(2, 1.0), zero2(2, 0.0);
  const Tensor n = layer_norm(Tensor::vector({1, -1}), one2, zero2, 1e-15);
  EXPECT_NEAR(n[0], 1.0, 1e-12);
  EXPECT_NEAR(n[1], -1.0, 1e-12);
}

TEST(LayerNorm, MomentsAndShiftInvariance) {
  Rng rng(5);
  const std::size_t c = 33;
  const Tensor x = uniform_tensor({c}, -4, 9, rng);
  const std::vector<double> g(c, 1.0), b(c, 0.0);
  const Tensor y = layer_norm(x, g, b, 1e-12);
  const double mean = std::accumulate(y.values().begin(), y.values().end(), 0.0) / c;
  double var = 0.0;
  for (double v : y.values()) var += (v - mean) * (v - mean);
  var /= c;
  EXPECT_LT(std::abs(mean), 1e-10);
  EXPECT_NEAR(var, 1.0, 1e-6);

  Tensor shifted = x;
  for (auto& v : shifted.data()) v += 17.25;
  EXPECT_LE(max_abs_diff(layer_norm(shifted, g, b), layer_norm(x, g, b)), 1e-9);
}

TEST(LayerNorm, RejectsBadArguments) {
  const std::vector<double> g(2, 1.0), b(2, 0.0);
  EXPECT_THROW(layer_norm(Tensor::vector({1, 2, 3}), g, b), ShapeError);
  EXPECT_THROW(layer_norm(Tensor::vector({1, 2}), g, b, 0.0), ValidationError);
}

TEST(BatchNorm, IdentityAndZero) {
  BatchNormParams bn = BatchNormParams::identity(3, 0.0);
  const Tensor x = Tensor::matrix({{1, -2, 3}, {0.5, 0, -7}});
  EXPECT_EQ(batch_norm_affine(x, bn), x);
  bn.eps = 1e-5;
  const Tensor z = batch_norm_affine(Tensor({2, 3}), bn);
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, MatchesScalarFormula) {
  Rng rng(6);
  const std::size_t c = 5;
  BatchNormParams bn = BatchNormParams::identity(c);
  std::uniform_real_distribution<double> u(-1, 1), pos(0.1, 2);
  for (std::size_t i = 0; i < c; ++i) {
    bn.mean[i] = u(rng);
    bn.var[i] = pos(rng);
    bn.gamma[i] = pos(rng);
    bn.beta[i] = u(rng);
  }
  const Tensor x = uniform_tensor({4, 3, c}, -3, 3, rng);
  const Tensor y = batch_norm_affine(x, bn);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t ch = i % c;
    const double ref = bn.gamma[ch] * (x[i] - bn.mean[ch]) / std::sqrt(bn.var[ch] + bn.eps) + bn.beta[ch];
    EXPECT_DOUBLE_EQ(y[i], ref);
  }
}

TEST(BatchNorm, RejectsNegativeVariance) {
  BatchNormParams bn = BatchNormParams::identity(2);
  bn.var[1] = -0.1;
  EXPECT_THROW(batch_norm_affine(Tensor({1, 2}), bn), ValidationError);
}

TEST(Activation, ReluAndTanh) {
  EXPECT_EQ(elementwise_activation(Tensor::vector({-1, 0, 2}), Relu{}), Tensor::vector({0, 0, 2}));
  EXPECT_EQ(elementwise_activation(Tensor::vector({0}), Tanh{}), Tensor::vector({0}));
}

TEST(Activation, DropoutStatistics) {
  const Tensor ones({100000}, 1.0);
  const Tensor y = elementwise_activation(ones, Dropout{0.30, 42, false});
  std::size_t zeros = 0;
  for (double v : y.values()) {
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(v, 1.0 / 0.7);
    }
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 1e5, 0.30, 0.01);
}

TEST(Activation, DropoutIsIdentityInInferenceAndDeterministic) {
  Rng rng(7);
  const Tensor x = uniform_tensor({50}, -1, 1, rng);
  EXPECT_EQ(dropout(x, Dropout{0.5, 1, true}), x);
  EXPECT_EQ(dropout(x, Dropout{0.5, 9, false}), dropout(x, Dropout{0.5, 9, false}));
  EXPECT_NE(dropout(x, Dropout{0.5, 9, false}), dropout(x, Dropout{0.5, 10, false}));
}

TEST(Activation, DropoutRejectsRateOne) {
  EXPECT_THROW(dropout(Tensor({3}), Dropout{1.0, 0, false}), ValidationError);
  EXPECT_THROW(dropout(Tensor({3}), Dropout{-0.1, 0, false}), ValidationError);
}

TEST(Spectral, UnitFilterRoundTrip) {
  Rng rng(8);
  for (std::size_t n : {1u, 4u, 7u, 16u, 49u}) {
    const Tensor x = uniform_tensor({2, n, 3}, -1, 1, rng);
    const std::vector<Complex> ones(n, Complex(1.0, 0.0));
    EXPECT_LE(max_abs_diff(spectral_filter(x, ones), x), 1e-9) << "n=" << n;
    const std::vector<Complex> zeros(n, Complex(0.0, 0.0));
    EXPECT_LE(max_abs(spectral_filter(x, zeros)), 0.0);
  }
}

TEST(Spectral, DftMatchesDirectSum) {
  Rng rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t n : {5u, 8u, 12u, 32u}) {
    std::vector<Complex> x(n);
    for (auto& v : x) v = {u(rng), u(rng)};
    for (bool inverse : {false, true}) {
      std::vector<Complex> got = x;
      dft_inplace(got, inverse);
      const std::vector<Complex> ref = naive_dft(x, inverse);
      for (std::size_t i = 0; i < n; ++i) EXPECT_LE(std::abs(got[i] - ref[i]), 1e-9);
    }
  }
}

TEST(Spectral, FilterMatchesDirectEvaluation) {
  Rng rng(10);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t n : {6u, 8u}) {
    const std::size_t c = 3;
    const Tensor x = uniform_tensor({n, c}, -1, 1, rng);
    std::vector<Complex> filter(n);
    for (auto& f : filter) f = {u(rng), u(rng)};
    const Tensor y = spectral_filter(x, filter);
    for (std::size_t ch = 0; ch < c; ++ch) {
      std::vector<Complex> col(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = x[i * c + ch];
      std::vector<Complex> freq = naive_dft(col, false);
      for (std::size_t i = 0; i < n; ++i) freq[i] *= filter[i];
      const std::vector<Complex> back = naive_dft(freq, true);
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y[i * c + ch], back[i].real(), 1e-9);
    }
  }
}

TEST(Spectral, BackwardIsAdjoint) {
  Rng rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  const std::size_t n = 7, c = 2;
  std::vector<Complex> filter(n);
  for (auto& f : filter) f = {u(rng), u(rng)};
  const Tensor x = uniform_tensor({n, c}, -1, 1, rng);
  const Tensor dy = uniform_tensor({n, c}, -1, 1, rng);
  const Tensor y = spectral_filter(x, filter);
  const Tensor dx = spectral_filter_backward(dy, filter);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lhs += y[i] * dy[i];
    rhs += x[i] * dx[i];
  }
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(GradCheck, QuadraticAndConstant) {
  const Tensor x = Tensor::vector({1, 2});
  auto sq = [](const Tensor& p) {
    double s = 0.0;
    for (double v : p.values()) s += v * v;
    return s;
  };
  EXPECT_LT(grad_check(sq, x, Tensor::vector({2, 4})), 1e-7);

  auto sum_softmax = [](const Tensor& p) {
    const Tensor y = softmax_lastdim(p);
    return std::accumulate(y.values().begin(), y.values().end(), 0.0);
  };
  const Tensor g = numeric_gradient(sum_softmax, Tensor::vector({0.3, -1.2, 2.0}));
  for (double v : g.values()) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(GradCheck, ReportsNonFiniteCoordinate) {
  auto f = [](const Tensor& p) { return p[1] > 1.0 ? std::nan("") : p[0]; };
  try {
    numeric_gradient(f, Tensor::vector({0.0, 1.0}));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos) << e.what();
  }
}

TEST(GradCheck, DetectsWrongGradient) {
  auto sq = [](const Tensor& p) { return p[0] * p[0]; };
  EXPECT_GT(grad_check(sq, Tensor::vector({3.0}), Tensor::vector({5.0})), 0.1);
}

TEST(LinearMap, AppliesOverLastAxis) {
  LinearMap m(Tensor::matrix({{1, 2, 3}, {4, 5, 6}}), {0.5, 0.0, -0.5});
  const Tensor y = m.apply(Tensor({2, 2, 2}, std::vector<double>{1, 0, 0, 1, 1, 1, 2, -1}));
  ASSERT_EQ(y.shape(), (Shape{2, 2, 3}));
  EXPECT_EQ(y.at({0, 0, 0}), 1.5);
  EXPECT_EQ(y.at({1, 0, 2}), 8.5);
  EXPECT_EQ(y.at({1, 1, 1}), -1.0);
  EXPECT_THROW(m.apply(Tensor({3})), ShapeError);
}

TEST(LinearMap, BackwardInputMatchesFiniteDifferences) {
  Rng rng(12);
  const LinearMap m = LinearMap::random(4, 3, true, rng);
  const Tensor x = uniform_tensor({2, 4}, -1, 1, rng);
  const Tensor w = uniform_tensor({2, 3}, -1, 1, rng);
  auto loss = [&](const Tensor& p) {
    const Tensor y = m.apply(p);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
    return s;
  };
  EXPECT_LT(grad_check(loss, x, m.backward_input(w)), 1e-7);
}

}  // namespace
}  // namespace savid
