#include "rmldp/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace rmldp {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void check_finite(OpKind kind, const std::vector<const Tensor*>& inputs) {
  for (const Tensor* t : inputs) {
    for (double v : t->values()) {
      if (!std::isfinite(v)) {
        throw NonFiniteError(std::string(op_name(kind)) + ": non-finite input value");
      }
    }
  }
}

template <class F>
Tensor finish(OpKind kind, Shape shape, std::vector<double> values,
              const std::vector<const Tensor*>& inputs, F&& backward) {
  if (finite_check_enabled()) check_finite(kind, inputs);
  Tape* tape = nullptr;
  if (grad_recording_enabled()) {
    for (const Tensor* in : inputs) {
      if (!in->tape()) continue;
      if (tape && tape != in->tape()) {
        throw Error(std::string(op_name(kind)) + ": inputs live on different tapes");
      }
      tape = in->tape();
    }
  }
  if (!tape) return Tensor(std::move(shape), std::move(values));
  return tape->record(kind, std::move(shape), std::move(values), inputs,
                      BackwardFn(std::forward<F>(backward)));
}

void require_defined(OpKind kind, const Tensor& t) {
  if (t.empty()) throw ShapeError(std::string(op_name(kind)) + ": empty operand");
}

void require_rank2(OpKind kind, const Tensor& t) {
  require_defined(kind, t);
  if (t.rank() != 2) {
    throw ShapeError(std::string(op_name(kind)) + ": expected a rank-2 operand, got " +
                     shape_string(t.shape()));
  }
}

void require_same(OpKind kind, const Tensor& a, const Tensor& b) {
  require_defined(kind, a);
  require_defined(kind, b);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op_name(kind)) + ": shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

template <class F>
std::vector<double> map_values(const Tensor& a, F&& f) {
  std::vector<double> out(a.size());
  auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return out;
}

template <class F>
std::vector<double> zip_values(const Tensor& a, const Tensor& b, F&& f) {
  std::vector<double> out(a.size());
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  require_rank2(OpKind::matmul, a);
  require_rank2(OpKind::matmul, b);
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t k = transpose_a ? a.rows() : a.cols();
  const std::size_t kb = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) +
                     (transpose_a ? "^T" : "") + " x " + shape_string(b.shape()) +
                     (transpose_b ? "^T" : ""));
  }
  std::vector<double> out(m * n, 0.0);
  ConstMap ma(a.values().data(), a.rows(), a.cols());
  ConstMap mb(b.values().data(), b.rows(), b.cols());
  MutMap mc(out.data(), m, n);
  if (k > 0) {
    if (!transpose_a && !transpose_b) mc.noalias() = ma * mb;
    else if (!transpose_a) mc.noalias() = ma * mb.transpose();
    else if (!transpose_b) mc.noalias() = ma.transpose() * mb;
    else mc.noalias() = ma.transpose() * mb.transpose();
  }
  return finish(OpKind::matmul, {m, n}, std::move(out), {&a, &b},
                [a, b, transpose_a, transpose_b](const Tensor& g, const Tensor&,
                                                 std::span<const bool> needs) {
                  std::vector<Tensor> r(2);
                  if (needs[0]) {
                    r[0] = transpose_a ? matmul(b, g, transpose_b, true)
                                       : matmul(g, b, false, !transpose_b);
                  }
                  if (needs[1]) {
                    r[1] = transpose_b ? matmul(g, a, true, transpose_a)
                                       : matmul(a, g, !transpose_a, false);
                  }
                  return r;
                });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(OpKind::add, a, b);
  return finish(OpKind::add, a.shape(), zip_values(a, b, [](double x, double y) { return x + y; }),
                {&a, &b},
                [](const Tensor& g, const Tensor&, std::span<const bool>) {
                  return std::vector<Tensor>{g, g};
                });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_rank2(OpKind::add_bias, a);
  require_rank2(OpKind::add_bias, bias);
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_bias: bias " + shape_string(bias.shape()) + " does not fit " +
                     shape_string(a.shape()));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  const std::size_t n = a.cols();
  auto bv = bias.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
  return finish(OpKind::add_bias, a.shape(), std::move(out), {&a, &bias},
                [](const Tensor& g, const Tensor&, std::span<const bool> needs) {
                  std::vector<Tensor> r(2);
                  if (needs[0]) r[0] = g;
                  if (needs[1]) r[1] = sum_rows(g);
                  return r;
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(OpKind::sub, a, b);
  return finish(OpKind::sub, a.shape(), zip_values(a, b, [](double x, double y) { return x - y; }),
                {&a, &b},
                [](const Tensor& g, const Tensor&, std::span<const bool> needs) {
                  std::vector<Tensor> r(2);
                  if (needs[0]) r[0] = g;
                  if (needs[1]) r[1] = scale(g, -1.0);
                  return r;
                });
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  require_same(OpKind::multiply, a, b);
  return finish(OpKind::multiply, a.shape(),
                zip_values(a, b, [](double x, double y) { return x * y; }), {&a, &b},
                [a, b](const Tensor& g, const Tensor&, std::span<const bool> needs) {
                  std::vector<Tensor> r(2);
                  if (needs[0]) r[0] = multiply(g, b);
                  if (needs[1]) r[1] = multiply(g, a);
                  return r;
                });
}

Tensor scale(const Tensor& a, double factor) {
  require_defined(OpKind::scale, a);
  return finish(OpKind::scale, a.shape(), map_values(a, [factor](double x) { return x * factor; }),
                {&a},
                [factor](const Tensor& g, const Tensor&, std::span<const bool>) {
                  return std::vector<Tensor>{scale(g, factor)};
                });
}

Tensor add_scalar(const Tensor& a, double value) {
  require_defined(OpKind::add_scalar, a);
  return finish(OpKind::add_scalar, a.shape(),
                map_values(a, [value](double x) { return x + value; }), {&a},
                [](const Tensor& g, const Tensor&, std::span<const bool>) {
                  return std::vector<Tensor>{g};
                });
}

Tensor sigmoid(const Tensor& a) {
  require_defined(OpKind::sigmoid, a);
  auto out = map_values(a, [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return finish(OpKind::sigmoid, a.shape(), std::move(out), {&a},
                [](const Tensor& g, const Tensor& y, std::span<const bool>) {
                  // y (1 - y)
                  Tensor slope = multiply(y, add_scalar(scale(y, -1.0), 1.0));
                  return std::vector<Tensor>{multiply(g, slope)};
                });
}

Tensor tanh(const Tensor& a) {
  require_defined(OpKind::tanh, a);
  return finish(OpKind::tanh, a.shape(), map_values(a, [](double x) { return std::tanh(x); }),
                {&a},
                [](const Tensor& g, const Tensor& y, std::span<const bool>) {
                  Tensor slope = add_scalar(scale(multiply(y, y), -1.0), 1.0);
                  return std::vector<Tensor>{multiply(g, slope)};
                });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_rank2(OpKind::concat, p);
  std::size_t rows = 0, cols = 0;
  for (const auto& p : parts) {
    const std::size_t fixed = axis == 0 ? p.cols() : p.rows();
    const std::size_t ref = axis == 0 ? parts[0].cols() : parts[0].rows();
    if (fixed != ref) {
      throw ShapeError("concat: operand " + shape_string(p.shape()) + " does not match " +
                       shape_string(parts[0].shape()) + " on the non-concat axis");
    }
    if (axis == 0) rows += p.rows();
    else cols += p.cols();
  }
  if (axis == 0) cols = parts[0].cols();
  else rows = parts[0].rows();

  std::vector<double> out(rows * cols);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    auto v = p.values();
    if (axis == 0) {
      std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(offset * cols));
      offset += p.rows();
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy(v.begin() + static_cast<std::ptrdiff_t>(r * p.cols()),
                  v.begin() + static_cast<std::ptrdiff_t>((r + 1) * p.cols()),
                  out.begin() + static_cast<std::ptrdiff_t>(r * cols + offset));
      }
      offset += p.cols();
    }
  }

  std::vector<const Tensor*> inputs;
  std::vector<Shape> shapes;
  for (const auto& p : parts) {
    inputs.push_back(&p);
    shapes.push_back(p.shape());
  }
  return finish(OpKind::concat, {rows, cols}, std::move(out), inputs,
                [shapes, offsets, axis](const Tensor& g, const Tensor&,
                                        std::span<const bool> needs) {
                  std::vector<Tensor> r(shapes.size());
                  for (std::size_t k = 0; k < shapes.size(); ++k) {
                    if (!needs[k]) continue;
                    r[k] = axis == 0 ? block(g, offsets[k], 0, shapes[k][0], shapes[k][1])
                                     : block(g, 0, offsets[k], shapes[k][0], shapes[k][1]);
                  }
                  return r;
                });
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor block(const Tensor& a, std::size_t row0, std::size_t col0, std::size_t rows,
             std::size_t cols) {
  require_rank2(OpKind::block, a);
  if (row0 + rows > a.rows() || col0 + cols > a.cols()) {
    throw ShapeError("block: [" + std::to_string(row0) + "+" + std::to_string(rows) + ", " +
                     std::to_string(col0) + "+" + std::to_string(cols) + "] exceeds " +
                     shape_string(a.shape()));
  }
  std::vector<double> out(rows * cols);
  auto v = a.values();
  const std::size_t stride = a.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    auto src = v.begin() + static_cast<std::ptrdiff_t>((row0 + r) * stride + col0);
    std::copy(src, src + static_cast<std::ptrdiff_t>(cols),
              out.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  const std::size_t total_rows = a.rows(), total_cols = a.cols();
  return finish(OpKind::block, {rows, cols}, std::move(out), {&a},
                [=](const Tensor& g, const Tensor&, std::span<const bool>) {
                  return std::vector<Tensor>{pad(g, total_rows, total_cols, row0, col0)};
                });
}

Tensor pad(const Tensor& a, std::size_t rows, std::size_t cols, std::size_t row0,
           std::size_t col0) {
  require_rank2(OpKind::pad, a);
  if (row0 + a.rows() > rows || col0 + a.cols() > cols) {
    throw ShapeError("pad: " + shape_string(a.shape()) + " at (" + std::to_string(row0) + "," +
                     std::to_string(col0) + ") does not fit " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  std::vector<double> out(rows * cols, 0.0);
  auto v = a.values();
  const std::size_t n = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(v.begin() + static_cast<std::ptrdiff_t>(r * n),
              v.begin() + static_cast<std::ptrdiff_t>((r + 1) * n),
              out.begin() + static_cast<std::ptrdiff_t>((row0 + r) * cols + col0));
  }
  const std::size_t inner_rows = a.rows(), inner_cols = a.cols();
  return finish(OpKind::pad, {rows, cols}, std::move(out), {&a},
                [=](const Tensor& g, const Tensor&, std::span<const bool>) {
                  return std::vector<Tensor>{block(g, row0, col0, inner_rows, inner_cols)};
                });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(OpKind::reshape, a);
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                     shape_string(shape));
  }
  Shape original = a.shape();
  std::vector<double> out(a.values().begin(), a.values().end());
  return finish(OpKind::reshape, std::move(shape), std::move(out), {&a},
                [original](const Tensor& g, const Tensor&, std::span<const bool>) {
                  return std::vector<Tensor>{reshape(g, original)};
                });
}

Tensor sum(const Tensor& a) {
  require_defined(OpKind::sum, a);
  double s = 0.0;
  for (double v : a.values()) s += v;
  Shape shape = a.shape();
  return finish(OpKind::sum, {1, 1}, {s}, {&a},
                [shape](const Tensor& g, const Tensor&, std::span<const bool>) {
                  return std::vector<Tensor>{expand(g, shape)};
                });
}

Tensor mean(const Tensor& a) {
  require_defined(OpKind::mean, a);
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  double s = 0.0;
  for (double v : a.values()) s += v;
  const double inv = 1.0 / static_cast<double>(a.size());
  Shape shape = a.shape();
  return finish(OpKind::mean, {1, 1}, {s * inv}, {&a},
                [shape, inv](const Tensor& g, const Tensor&, std::span<const bool>) {
                  return std::vector<Tensor>{scale(expand(g, shape), inv)};
                });
}

Tensor expand(const Tensor& scalar, Shape shape) {
  require_defined(OpKind::expand, scalar);
  if (scalar.size() != 1) {
    throw ShapeError("expand: operand " + shape_string(scalar.shape()) + " is not a scalar");
  }
  const std::size_t n = shape_size(shape);
  Shape source = scalar.shape();
  return finish(OpKind::expand, std::move(shape), std::vector<double>(n, scalar[0]), {&scalar},
                [source](const Tensor& g, const Tensor&, std::span<const bool>) {
                  Tensor s = sum(g);
                  if (source != s.shape()) s = reshape(s, source);
                  return std::vector<Tensor>{s};
                });
}

Tensor sum_rows(const Tensor& a) {
  require_rank2(OpKind::sum_rows, a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(n, 0.0);
  auto v = a.values();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[c] += v[r * n + c];
  return finish(OpKind::sum_rows, {1, n}, std::move(out), {&a},
                [m](const Tensor& g, const Tensor&, std::span<const bool>) {
                  return std::vector<Tensor>{broadcast_rows(g, m)};
                });
}

Tensor broadcast_rows(const Tensor& row, std::size_t rows) {
  require_rank2(OpKind::broadcast_rows, row);
  if (row.rows() != 1) {
    throw ShapeError("broadcast_rows: expected 1 x n, got " + shape_string(row.shape()));
  }
  const std::size_t n = row.cols();
  std::vector<double> out(rows * n);
  auto v = row.values();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(r * n));
  return finish(OpKind::broadcast_rows, {rows, n}, std::move(out), {&row},
                [](const Tensor& g, const Tensor&, std::span<const bool>) {
                  return std::vector<Tensor>{sum_rows(g)};
                });
}

Tensor mse(const Tensor& prediction, const Tensor& target) {
  require_same(OpKind::mse, prediction, target);
  if (prediction.size() == 0) throw ShapeError("mse: empty operands");
  double s = 0.0;
  auto p = prediction.values();
  auto t = target.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    s += d * d;
  }
  const double n = static_cast<double>(p.size());
  return finish(OpKind::mse, {1, 1}, {s / n}, {&prediction, &target},
                [prediction, target, n](const Tensor& g, const Tensor&,
                                        std::span<const bool> needs) {
                  Tensor diff = sub(prediction, target);
                  Tensor gp = multiply(scale(expand(g, prediction.shape()), 2.0 / n), diff);
                  std::vector<Tensor> r(2);
                  if (needs[1]) r[1] = scale(gp, -1.0);
                  if (needs[0]) r[0] = std::move(gp);
                  return r;
                });
}

Tensor frobenius_squared(const Tensor& a) {
  require_defined(OpKind::frobenius_squared, a);
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return finish(OpKind::frobenius_squared, {1, 1}, {s}, {&a},
                [a](const Tensor& g, const Tensor&, std::span<const bool>) {
                  return std::vector<Tensor>{scale(multiply(expand(g, a.shape()), a), 2.0)};
                });
}

Tensor apply(OpKind kind, std::span<const Tensor> inputs, double factor) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ShapeError(std::string(op_name(kind)) + ": expected " + std::to_string(n) +
                       " operands, got " + std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::matmul: need(2); return matmul(inputs[0], inputs[1]);
    case OpKind::add: need(2); return add(inputs[0], inputs[1]);
    case OpKind::add_bias: need(2); return add_bias(inputs[0], inputs[1]);
    case OpKind::sub: need(2); return sub(inputs[0], inputs[1]);
    case OpKind::multiply: need(2); return multiply(inputs[0], inputs[1]);
    case OpKind::scale: need(1); return scale(inputs[0], factor);
    case OpKind::add_scalar: need(1); return add_scalar(inputs[0], factor);
    case OpKind::sigmoid: need(1); return sigmoid(inputs[0]);
    case OpKind::tanh: need(1); return tanh(inputs[0]);
    case OpKind::concat: return concat(inputs, 1);
    case OpKind::sum: need(1); return sum(inputs[0]);
    case OpKind::mean: need(1); return mean(inputs[0]);
    case OpKind::sum_rows: need(1); return sum_rows(inputs[0]);
    case OpKind::mse: need(2); return mse(inputs[0], inputs[1]);
    case OpKind::frobenius_squared: need(1); return frobenius_squared(inputs[0]);
    default:
      throw Error(std::string("apply: op kind '") + op_name(kind) +
                  "' needs structural arguments; call it directly");
  }
}

}  // namespace rmldp
