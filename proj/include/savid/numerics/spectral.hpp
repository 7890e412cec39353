#pragma once

#include <complex>
#include <span>
#include <vector>

#include "savid/numerics/tensor.hpp"

namespace savid {

using Complex = std::complex<double>;

/// In-place discrete Fourier transform. Uses iterative radix-2 when the
/// length is a power of two and a direct O(N^2) sum otherwise. The inverse
/// transform includes the 1/N factor.
void dft_inplace(std::vector<Complex>& values, bool inverse);

/// Per channel of x[..., N, C]: forward DFT along the token axis N,
/// multiply by `filter` (length N), inverse DFT, keep the real part.
Tensor spectral_filter(const Tensor& x, std::span<const Complex> filter);

/// Adjoint of spectral_filter with respect to x. The operator is real and
/// linear, and its transpose is the same filter with conjugated taps.
Tensor spectral_filter_backward(const Tensor& dy, std::span<const Complex> filter);

}  // namespace savid
