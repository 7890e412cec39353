#include "savid/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "savid/errors.hpp"

namespace savid {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

void require_channels(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got) {
    throw ShapeError(std::string(what) + " has length " + std::to_string(got) + ", expected " +
                     std::to_string(expected));
  }
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out = x;
  for (double& v : out.data()) v = f(v);
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2 || a.rank() != b.rank()) {
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t r = a.rank();
  const std::size_t m = a.dim(r - 2), k = a.dim(r - 1);
  const std::size_t k2 = b.dim(r - 2), n = b.dim(r - 1);
  const bool leading_match = std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin());
  if (k != k2 || !leading_match) {
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  Shape out_shape(a.shape().begin(), a.shape().end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out(out_shape);
  const std::size_t batch = a.size() / (m * k);
  auto A = a.data();
  auto B = b.data();
  auto C = out.data();
  for (std::size_t s = 0; s < batch; ++s) {
    const double* as = A.data() + s * m * k;
    const double* bs = B.data() + s * k * n;
    double* cs = C.data() + s * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = cs + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = as[i * k + p];
        const double* brow = bs + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  }
  return out;
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("transpose_last2 needs rank >= 2, got " + to_string(x.shape()));
  const std::size_t r = x.rank();
  const std::size_t m = x.dim(r - 2), n = x.dim(r - 1);
  Shape shape = x.shape();
  std::swap(shape[r - 2], shape[r - 1]);
  Tensor out(shape);
  const std::size_t batch = x.size() / (m * n);
  for (std::size_t s = 0; s < batch; ++s) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[s * m * n + j * m + i] = x[s * m * n + i * n + j];
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  return map(x, [factor](double v) { return v * factor; });
}

Tensor softmax_lastdim(const Tensor& x) {
  const std::size_t n = x.last_dim();
  if (n == 0) throw ShapeError("softmax_lastdim: last dimension must be >= 1");
  Tensor out(x.shape());
  const std::size_t rows = x.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double* o = out.data().data() + r * n;
    const double peak = *std::max_element(in, in + n);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      // exp(-inf - peak) == 0 keeps masked logits out of the distribution.
      o[j] = std::exp(in[j] - peak);
      sum += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= sum;
  }
  return out;
}

Tensor softmax_lastdim_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "softmax_lastdim_backward");
  const std::size_t n = y.last_dim();
  Tensor dx(y.shape());
  const std::size_t rows = y.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += y[r * n + j] * dy[r * n + j];
    for (std::size_t j = 0; j < n; ++j) dx[r * n + j] = y[r * n + j] * (dy[r * n + j] - dot);
  }
  return dx;
}

Tensor layer_norm(const Tensor& x, std::span<const double> gamma, std::span<const double> beta, double eps) {
  const std::size_t n = x.last_dim();
  require_channels(n, gamma.size(), "layer_norm gamma");
  require_channels(n, beta.size(), "layer_norm beta");
  if (!(eps > 0.0)) throw ValidationError("layer_norm: eps must be positive");
  Tensor out(x.shape());
  const std::size_t rows = x.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += in[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = gamma[j] * (in[j] - mean) * inv_std + beta[j];
  }
  return out;
}

LayerNormGrad layer_norm_backward(const Tensor& x, std::span<const double> gamma, const Tensor& dy, double eps) {
  require_same_shape(x, dy, "layer_norm_backward");
  const std::size_t n = x.last_dim();
  require_channels(n, gamma.size(), "layer_norm gamma");
  LayerNormGrad grad{Tensor(x.shape()), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  const std::size_t rows = x.size() / n;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> xhat(n), g(n);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    const double* d = dy.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += in[j];
    mean *= inv_n;
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (in[j] - mean) * (in[j] - mean);
    var *= inv_n;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      xhat[j] = (in[j] - mean) * inv_std;
      g[j] = d[j] * gamma[j];
      sum_g += g[j];
      sum_gx += g[j] * xhat[j];
      grad.dgamma[j] += d[j] * xhat[j];
      grad.dbeta[j] += d[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      grad.dx[r * n + j] = inv_std * (g[j] - inv_n * sum_g - xhat[j] * inv_n * sum_gx);
    }
  }
  return grad;
}

BatchNormParams BatchNormParams::identity(std::size_t channels, double eps) {
  return BatchNormParams{std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0),
                         std::vector<double>(channels, 1.0), std::vector<double>(channels, 0.0), eps};
}

namespace {

void validate_bn(const BatchNormParams& bn, std::size_t channels) {
  require_channels(channels, bn.mean.size(), "batch_norm mean");
  require_channels(channels, bn.var.size(), "batch_norm var");
  require_channels(channels, bn.gamma.size(), "batch_norm gamma");
  require_channels(channels, bn.beta.size(), "batch_norm beta");
  for (double v : bn.var) {
    if (v < 0.0) throw ValidationError("batch_norm: negative variance " + std::to_string(v));
  }
  if (bn.eps < 0.0) throw ValidationError("batch_norm: eps must be non-negative");
}

}  // namespace

Tensor batch_norm_affine(const Tensor& x, const BatchNormParams& bn) {
  const std::size_t c = x.last_dim();
  validate_bn(bn, c);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t ch = i % c;
    out[i] = bn.gamma[ch] * (x[i] - bn.mean[ch]) / std::sqrt(bn.var[ch] + bn.eps) + bn.beta[ch];
  }
  return out;
}

Tensor batch_norm_affine_backward(const Tensor& dy, const BatchNormParams& bn) {
  const std::size_t c = dy.last_dim();
  validate_bn(bn, c);
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const std::size_t ch = i % c;
    dx[i] = dy[i] * bn.gamma[ch] / std::sqrt(bn.var[ch] + bn.eps);
  }
  return dx;
}

Tensor relu(const Tensor& x) {
  return map(x, [](double v) { return v > 0.0 ? v : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return map(x, [](double v) { return std::tanh(v); });
}

Tensor sigmoid(const Tensor& x) {
  return map(x, [](double v) { return sigmoid(v); });
}

Tensor dropout(const Tensor& x, const Dropout& spec) {
  if (!(spec.rate >= 0.0) || spec.rate >= 1.0) {
    throw ValidationError("dropout rate must lie in [0, 1), got " + std::to_string(spec.rate));
  }
  if (spec.inference || spec.rate == 0.0) return x;
  std::mt19937_64 rng(spec.seed);
  std::bernoulli_distribution drop(spec.rate);
  const double keep_scale = 1.0 / (1.0 - spec.rate);
  Tensor out = x;
  for (double& v : out.data()) v = drop(rng) ? 0.0 : v * keep_scale;
  return out;
}

Tensor elementwise_activation(const Tensor& x, const Activation& kind) {
  struct Visitor {
    const Tensor& x;
    Tensor operator()(Relu) const { return relu(x); }
    Tensor operator()(Tanh) const { return tanh(x); }
    Tensor operator()(const Dropout& d) const { return dropout(x, d); }
  };
  return std::visit(Visitor{x}, kind);
}

}  // namespace savid
