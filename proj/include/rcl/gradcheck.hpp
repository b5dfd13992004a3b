#pragma once

#include <functional>

#include "rcl/tape.hpp"

namespace rcl {

// Scalar function recorded on a fresh tape for each evaluation.
using ScalarFn = std::function<Var(Tape&, Var)>;

/// Compares the reverse-mode gradient of f at x against central
/// differences with step h. Returns the maximum over coordinates of
/// |g_auto - g_fd| / max(1, |g_fd|).
///
/// Throws ConfigError for h <= 0 and NumericError when f is non-finite
/// anywhere in the probed region.
double finite_diff_check(const ScalarFn& f, const Tensor& x, double h);

// Reverse-mode gradient of f at x (zeros when f does not depend on x).
Tensor autodiff_gradient(const ScalarFn& f, const Tensor& x);

}  // namespace rcl
