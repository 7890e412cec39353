#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "savid/numerics/tensor.hpp"

namespace savid {

/// Batched matrix product: (..., M, K) x (..., K, N) -> (..., M, N).
/// Leading dimensions must match exactly.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Swaps the last two axes.
Tensor transpose_last2(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// Numerically stable softmax over the last axis (max subtraction).
Tensor softmax_lastdim(const Tensor& x);

/// Vector-Jacobian product of softmax given its output `y` and upstream `dy`.
Tensor softmax_lastdim_backward(const Tensor& y, const Tensor& dy);

inline constexpr double kDefaultNormEps = 1e-5;

/// Normalizes every last-axis slice to zero mean and unit variance, then
/// applies gamma/beta. Variance is the biased (population) estimate.
Tensor layer_norm(const Tensor& x, std::span<const double> gamma, std::span<const double> beta,
                  double eps = kDefaultNormEps);

struct LayerNormGrad {
  Tensor dx;
  std::vector<double> dgamma;
  std::vector<double> dbeta;
};

LayerNormGrad layer_norm_backward(const Tensor& x, std::span<const double> gamma, const Tensor& dy,
                                  double eps = kDefaultNormEps);

/// Inference-mode batch normalization with supplied per-channel statistics.
/// Channels are the last axis.
struct BatchNormParams {
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> gamma;
  std::vector<double> beta;
  double eps = kDefaultNormEps;

  /// Frozen statistics (mean 0, var 1) with unit affine.
  static BatchNormParams identity(std::size_t channels, double eps = kDefaultNormEps);
};

Tensor batch_norm_affine(const Tensor& x, const BatchNormParams& bn);

/// d/dx of batch_norm_affine: per-channel gamma / sqrt(var + eps).
Tensor batch_norm_affine_backward(const Tensor& dy, const BatchNormParams& bn);

struct Relu {};
struct Tanh {};
struct Dropout {
  double rate = 0.0;
  std::uint64_t seed = 0;
  // Inverted dropout: survivors are scaled by 1/(1-rate) while training, and
  // the op is the identity in inference.
  bool inference = true;
};
using Activation = std::variant<Relu, Tanh, Dropout>;

Tensor elementwise_activation(const Tensor& x, const Activation& kind);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor dropout(const Tensor& x, const Dropout& spec);

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace savid
