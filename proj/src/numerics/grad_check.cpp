#include "savid/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "savid/errors.hpp"

namespace savid {

Tensor numeric_gradient(const ScalarFunction& f, const Tensor& x, double step) {
  if (!(step > 0.0)) throw ValidationError("numeric_gradient: step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + step;
    const double plus = f(probe);
    probe[i] = original - step;
    const double minus = f(probe);
    probe[i] = original;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NumericalError("non-finite function value while perturbing coordinate " + std::to_string(i));
    }
    grad[i] = (plus - minus) / (2.0 * step);
  }
  return grad;
}

double grad_check(const ScalarFunction& f, const Tensor& x, const Tensor& analytic_grad, double step) {
  if (analytic_grad.shape() != x.shape()) {
    throw ShapeError("grad_check: gradient shape " + to_string(analytic_grad.shape()) + " does not match " +
                     to_string(x.shape()));
  }
  const Tensor numeric = numeric_gradient(f, x, step);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = analytic_grad[i];
    const double b = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    worst = std::max(worst, std::abs(a - b) / denom);
  }
  return worst;
}

}  // namespace savid
