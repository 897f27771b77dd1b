#pragma once

// Differentiable operations. Every op records itself on the tape of its
// tracked inputs (if any) unless a NoGradGuard is active.

#include <span>
#include <vector>

#include "rmldp/tensor.hpp"

namespace rmldp {

/// op(a) * op(b) for rank-2 operands, op = transpose when the flag is set.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false,
              bool transpose_b = false);

Tensor add(const Tensor& a, const Tensor& b);
/// a (m x n) plus a 1 x n row added to every row.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise (Hadamard) product.
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

/// Concatenation of rank-2 tensors along axis 0 (rows) or 1 (columns).
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);

/// Rectangular sub-block of a rank-2 tensor.
Tensor block(const Tensor& a, std::size_t row0, std::size_t col0, std::size_t rows,
             std::size_t cols);
/// Embeds `a` into a zero matrix of the given size; adjoint of block.
Tensor pad(const Tensor& a, std::size_t rows, std::size_t cols, std::size_t row0,
           std::size_t col0);
Tensor reshape(const Tensor& a, Shape shape);

/// Reductions to a 1 x 1 scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Broadcasts a single-element tensor to `shape`.
Tensor expand(const Tensor& scalar, Shape shape);
/// Column sums: m x n -> 1 x n.
Tensor sum_rows(const Tensor& a);
/// Repeats a 1 x n row m times.
Tensor broadcast_rows(const Tensor& row, std::size_t rows);

/// Mean of squared differences over all elements.
Tensor mse(const Tensor& prediction, const Tensor& target);
/// Sum of squared elements.
Tensor frobenius_squared(const Tensor& a);

/// Generic entry point for the op kinds that take only tensor operands.
/// `factor` is used by scale and add_scalar; concat joins columns.
Tensor apply(OpKind kind, std::span<const Tensor> inputs, double factor = 1.0);

}  // namespace rmldp
