#include "savid/numerics/spectral.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "savid/errors.hpp"

namespace savid {

namespace {

void radix2(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Twiddles are evaluated directly rather than by repeated
        // multiplication so the error does not grow with len.
        const Complex w = std::polar(1.0, angle * static_cast<double>(k));
        const Complex u = a[start + k];
        const Complex v = a[start + k + len / 2] * w;
        a[start + k] = u + v;
        a[start + k + len / 2] = u - v;
      }
    }
  }
}

void direct(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<Complex> twiddle(n);
  for (std::size_t m = 0; m < n; ++m) {
    twiddle[m] = std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n));
  }
  // Plain real arithmetic: std::complex multiplication carries NaN
  // recovery branches that dominate this loop.
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    double re = 0.0, im = 0.0;
    std::size_t phase = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double ar = a[j].real(), ai = a[j].imag();
      const double tr = twiddle[phase].real(), ti = twiddle[phase].imag();
      re += ar * tr - ai * ti;
      im += ar * ti + ai * tr;
      phase += k;
      if (phase >= n) phase -= n;
    }
    out[k] = {re, im};
  }
  a = std::move(out);
}

Tensor apply_filter(const Tensor& x, std::span<const Complex> filter, bool conjugate) {
  if (x.rank() < 2) throw ShapeError("spectral_filter expects (..., N, C), got " + to_string(x.shape()));
  const std::size_t n = x.dim(x.rank() - 2);
  const std::size_t c = x.dim(x.rank() - 1);
  if (filter.size() != n) {
    throw ShapeError("spectral_filter: filter length " + std::to_string(filter.size()) +
                     " does not match token count " + std::to_string(n));
  }
  Tensor out(x.shape());
  const std::size_t batch = x.size() / (n * c);
  std::vector<Complex> buf(n);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * n * c;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t t = 0; t < n; ++t) buf[t] = Complex(x[base + t * c + ch], 0.0);
      dft_inplace(buf, false);
      for (std::size_t t = 0; t < n; ++t) buf[t] *= conjugate ? std::conj(filter[t]) : filter[t];
      dft_inplace(buf, true);
      for (std::size_t t = 0; t < n; ++t) out[base + t * c + ch] = buf[t].real();
    }
  }
  return out;
}

}  // namespace

void dft_inplace(std::vector<Complex>& values, bool inverse) {
  const std::size_t n = values.size();
  if (n == 0) throw ValidationError("dft_inplace: empty input");
  if (std::has_single_bit(n)) {
    radix2(values, inverse);
  } else {
    direct(values, inverse);
  }
  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& v : values) v *= inv_n;
  }
}

Tensor spectral_filter(const Tensor& x, std::span<const Complex> filter) { return apply_filter(x, filter, false); }

Tensor spectral_filter_backward(const Tensor& dy, std::span<const Complex> filter) {
  return apply_filter(dy, filter, true);
}

}  // namespace savid
