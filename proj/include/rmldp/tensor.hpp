#pragma once

// Dense row-major tensors and the reverse-mode tape that records operations
// on them.
//
// A Tensor is an immutable value (shared storage) plus an optional link to a
// node on a Tape. Only tensors created through Tape::leaf, or produced by an op
// with at least one tracked input, carry a node. Backward rules are expressed
// with the same differentiable ops, so a gradient computed with
// create_graph=true is itself a tracked tensor and can be differentiated again.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rmldp/error.hpp"

namespace rmldp {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

enum class OpKind {
  leaf,
  matmul,
  add,
  add_bias,
  sub,
  multiply,
  scale,
  add_scalar,
  sigmoid,
  tanh,
  concat,
  block,
  pad,
  reshape,
  sum,
  mean,
  expand,
  sum_rows,
  broadcast_rows,
  mse,
  frobenius_squared,
};

const char* op_name(OpKind kind);

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  /// 1 x n row vector.
  static Tensor row(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  bool empty() const { return !data_; }

  /// Leading dimension for rank-2 tensors (1 for rank 1).
  std::size_t rows() const;
  /// Trailing dimension.
  std::size_t cols() const;

  std::span<const double> values() const&;
  std::span<const double> values() const&& = delete;
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double item() const;

  bool requires_grad() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t node_id() const { return node_; }

  /// Same values, no tape link.
  Tensor detach() const;

  const std::shared_ptr<const std::vector<double>>& storage() const { return data_; }

 private:
  friend class Tape;
  Tensor(std::shared_ptr<const std::vector<double>> data, Shape shape, Tape* tape,
         std::size_t node);

  std::shared_ptr<const std::vector<double>> data_;
  Shape shape_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

/// Gradient of a backward rule with respect to each input; entries for inputs
/// that were not requested may be left empty.
using BackwardFn = std::function<std::vector<Tensor>(
    const Tensor& grad_out, const Tensor& out, std::span<const bool> needs)>;

using GradMap = std::map<std::string, Tensor>;

/// Append-only record of the operations executed on tracked tensors.
/// A tape belongs to exactly one thread; node ids increase in execution order,
/// so every input id precedes its consumer.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a named trainable leaf holding a copy of `value`'s storage.
  Tensor leaf(const std::string& name, const Tensor& value);

  /// Gradients of a scalar `loss` with respect to arbitrary tracked tensors.
  /// With create_graph=true the results are recorded on this tape.
  std::vector<Tensor> gradient(const Tensor& loss, std::span<const Tensor> wrt,
                               bool create_graph = false);

  /// Gradients for every named leaf; unreachable leaves receive zeros.
  GradMap backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(std::size_t node) const { return nodes_.at(node).kind; }
  const std::vector<std::size_t>& inputs(std::size_t node) const {
    return nodes_.at(node).inputs;
  }

  /// Used by op implementations; not part of the user-facing surface.
  Tensor record(OpKind kind, Shape shape, std::vector<double> values,
                std::initializer_list<const Tensor*> inputs, BackwardFn backward);
  Tensor record(OpKind kind, Shape shape, std::vector<double> values,
                const std::vector<const Tensor*>& inputs, BackwardFn backward);

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::shared_ptr<const std::vector<double>> value;
    Shape shape;
    std::string name;
  };

  Tensor output_of(std::size_t node);

  std::deque<Node> nodes_;
};

/// While alive, ops on this thread produce untracked results.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

/// Optional per-op finite-value assertion; off by default.
void set_finite_check(bool enabled);
bool finite_check_enabled();

}  // namespace rmldp
