#include "savid/numerics/linear.hpp"

#include <cmath>
#include <string>

#include "savid/errors.hpp"

namespace savid {

Tensor uniform_tensor(const Shape& shape, double lo, double hi, Rng& rng) {
  Tensor out(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : out.data()) v = dist(rng);
  return out;
}

LinearMap::LinearMap(Tensor weight, std::vector<double> bias) : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.rank() != 2) throw ShapeError("LinearMap weight must be (C_in, C_out), got " + to_string(weight_.shape()));
  if (!bias_.empty() && bias_.size() != weight_.dim(1)) {
    throw ShapeError("LinearMap bias length " + std::to_string(bias_.size()) + " does not match C_out " +
                     std::to_string(weight_.dim(1)));
  }
}

LinearMap LinearMap::random(std::size_t in, std::size_t out, bool with_bias, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Tensor w = uniform_tensor({in, out}, -bound, bound, rng);
  std::vector<double> b;
  if (with_bias) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    b.resize(out);
    for (double& v : b) v = dist(rng);
  }
  return LinearMap(std::move(w), std::move(b));
}

LinearMap LinearMap::zeros(std::size_t in, std::size_t out, bool with_bias) {
  return LinearMap(Tensor({in, out}), with_bias ? std::vector<double>(out, 0.0) : std::vector<double>{});
}

Tensor LinearMap::apply(const Tensor& x) const {
  const std::size_t in = in_features(), out = out_features();
  if (x.last_dim() != in) {
    throw ShapeError("LinearMap expects last dim " + std::to_string(in) + ", got " + to_string(x.shape()));
  }
  Shape shape = x.shape();
  shape.back() = out;
  Tensor y(shape);
  const std::size_t rows = x.size() / in;
  const double* w = weight_.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = y.data().data() + r * out;
    if (!bias_.empty()) {
      for (std::size_t j = 0; j < out; ++j) yr[j] = bias_[j];
    }
    const double* xr = x.data().data() + r * in;
    for (std::size_t p = 0; p < in; ++p) {
      const double xp = xr[p];
      const double* wrow = w + p * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += xp * wrow[j];
    }
  }
  return y;
}

Tensor LinearMap::backward_input(const Tensor& dy) const {
  const std::size_t in = in_features(), out = out_features();
  if (dy.last_dim() != out) {
    throw ShapeError("LinearMap backward expects last dim " + std::to_string(out) + ", got " + to_string(dy.shape()));
  }
  Shape shape = dy.shape();
  shape.back() = in;
  Tensor dx(shape);
  const std::size_t rows = dy.size() / out;
  const double* w = weight_.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* g = dy.data().data() + r * out;
    double* d = dx.data().data() + r * in;
    for (std::size_t p = 0; p < in; ++p) {
      double acc = 0.0;
      const double* wrow = w + p * out;
      for (std::size_t j = 0; j < out; ++j) acc += wrow[j] * g[j];
      d[p] = acc;
    }
  }
  return dx;
}

}  // namespace savid
