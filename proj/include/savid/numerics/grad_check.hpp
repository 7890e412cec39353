#pragma once

#include <functional>

#include "savid/numerics/tensor.hpp"

namespace savid {

using ScalarFunction = std::function<double(const Tensor&)>;

inline constexpr double kDefaultGradStep = 1e-6;

/// Central-difference gradient of f at x, one coordinate at a time.
/// Throws NumericalError naming the coordinate if f is non-finite there.
Tensor numeric_gradient(const ScalarFunction& f, const Tensor& x, double step = kDefaultGradStep);

/// Max over coordinates of |numeric - analytic| / max(|numeric|, |analytic|, 1e-8).
double grad_check(const ScalarFunction& f, const Tensor& x, const Tensor& analytic_grad,
                  double step = kDefaultGradStep);

}  // namespace savid
