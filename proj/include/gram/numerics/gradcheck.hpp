#pragma once

#include <functional>

#include "gram/numerics/autodiff.hpp"

namespace gram {

/// Central-difference estimate of d f / d p, one coordinate at a time.
/// `f` re-evaluates the objective from the current parameter values. Must be
/// called in F64 mode; `p.value` is restored on return.
Tensor finite_difference_gradient(const std::function<double()>& f, Parameter& p, double epsilon = 1e-3);

/// ||a - b|| / max(||a||, ||b||), or 0 when both vanish.
double relative_error(const Tensor& a, const Tensor& b);

}  // namespace gram
