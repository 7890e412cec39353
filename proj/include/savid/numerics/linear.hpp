#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "savid/numerics/tensor.hpp"

namespace savid {

using Rng = std::mt19937_64;

/// Tensor of the given shape filled with U(lo, hi) draws.
Tensor uniform_tensor(const Shape& shape, double lo, double hi, Rng& rng);

/// y = x W + b over the last axis: (..., C_in) -> (..., C_out).
class LinearMap {
 public:
  LinearMap() = default;
  /// weight is (C_in, C_out); bias is empty or length C_out.
  explicit LinearMap(Tensor weight, std::vector<double> bias = {});

  /// Seeded uniform(-1/sqrt(C_in), 1/sqrt(C_in)) initialization.
  static LinearMap random(std::size_t in, std::size_t out, bool with_bias, Rng& rng);
  static LinearMap zeros(std::size_t in, std::size_t out, bool with_bias);

  std::size_t in_features() const { return weight_.empty() ? 0 : weight_.dim(0); }
  std::size_t out_features() const { return weight_.empty() ? 0 : weight_.dim(1); }
  bool has_bias() const { return !bias_.empty(); }

  const Tensor& weight() const { return weight_; }
  Tensor& weight() { return weight_; }
  const std::vector<double>& bias() const { return bias_; }
  std::vector<double>& bias() { return bias_; }

  Tensor apply(const Tensor& x) const;

  /// dL/dx given dL/dy.
  Tensor backward_input(const Tensor& dy) const;

 private:
  Tensor weight_;
  std::vector<double> bias_;
};

}  // namespace savid
