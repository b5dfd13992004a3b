#pragma once

#include <optional>
#include <span>
#include <vector>

#include "rcl/tape.hpp"

// Differentiable primitives. Every op validates shapes, rejects
// non-finite outputs, and records itself on the tape of its inputs.
// Broadcasting is limited to add_bias.
namespace rcl::ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// Throws NumericError when any divisor entry is zero.
Var div(Var a, Var b);
Var scale(Var a, double factor);

// (n, m) + (m): adds the bias to every row.
Var add_bias(Var x, Var bias);
// (n, k) x (k, m).
Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

// 3x3 kernel, stride 1, zero padding 1.
// x: (N, C, H, W), weight: (O, C, 3, 3), bias: (O) -> (N, O, H, W).
Var conv2d_3x3(Var x, Var weight, Var bias);
// 2x2 window, stride 2; H and W must be even.
Var max_pool2x2(Var x);

// Subgradient 0 at the kink.
Var relu(Var a);
Var exp(Var a);
// Throws NumericError for non-positive entries.
Var log(Var a);

Var sum(Var a);
Var mean(Var a);
// Global maximum; the gradient goes to the first maximal entry.
Var max_reduce(Var a);

// Divides every row of a 2-D tensor by its l2 norm. Zero rows throw.
Var l2_normalize_rows(Var a);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);

// Row-wise log-softmax over a 2-D tensor. Entries where mask is 0 are
// excluded from the normaliser and produce 0 with zero gradient.
Var log_softmax_rows(Var a, const std::optional<Tensor>& mask = std::nullopt);

}  // namespace rcl::ops
