#include "gram/numerics/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace gram {

Tensor finite_difference_gradient(const std::function<double()>& f, Parameter& p, double epsilon) {
  if (precision() != Precision::F64) {
    throw std::logic_error("finite_difference_gradient requires 64-bit precision mode");
  }
  NoGradScope no_grad;
  Tensor grad(p.value.shape());
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double saved = p.value[i];
    p.value[i] = saved + epsilon;
    const double up = f();
    p.value[i] = saved - epsilon;
    const double down = f();
    p.value[i] = saved;
    grad[i] = (up - down) / (2.0 * epsilon);
  }
  return grad;
}

double relative_error(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("relative_error: shape mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

}  // namespace gram
