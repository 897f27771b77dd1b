#include "rmldp/tensor.hpp"

#include <cmath>
#include <optional>
#include <sstream>

#include "rmldp/ops.hpp"

namespace rmldp {

namespace {

thread_local bool g_recording = true;
thread_local bool g_finite_check = false;

constexpr std::size_t kNoNode = static_cast<std::size_t>(-1);

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::add_bias: return "add_bias";
    case OpKind::sub: return "sub";
    case OpKind::multiply: return "multiply";
    case OpKind::scale: return "scale";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh: return "tanh";
    case OpKind::concat: return "concat";
    case OpKind::block: return "block";
    case OpKind::pad: return "pad";
    case OpKind::reshape: return "reshape";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::expand: return "expand";
    case OpKind::sum_rows: return "sum_rows";
    case OpKind::broadcast_rows: return "broadcast_rows";
    case OpKind::mse: return "mse";
    case OpKind::frobenius_squared: return "frobenius_squared";
  }
  return "unknown";
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (shape_size(shape_) != values.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape_) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor::Tensor(std::shared_ptr<const std::vector<double>> data, Shape shape, Tape* tape,
               std::size_t node)
    : data_(std::move(data)), shape_(std::move(shape)), tape_(tape), node_(node) {}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, {value}); }

Tensor Tensor::row(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({1, n}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (shape_.size() < 2) return 1;
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 1;
  return shape_.back();
}

std::span<const double> Tensor::values() const& {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item: tensor of shape " + shape_string(shape_) + " is not a scalar");
  }
  return (*data_)[0];
}

Tensor Tensor::detach() const { return Tensor(data_, shape_, nullptr, 0); }

Tensor Tape::leaf(const std::string& name, const Tensor& value) {
  if (value.empty()) throw Error("leaf '" + name + "': empty tensor");
  nodes_.push_back(Node{OpKind::leaf, {}, {}, value.storage(), value.shape(), name});
  return Tensor(value.storage(), value.shape(), this, nodes_.size() - 1);
}

Tensor Tape::record(OpKind kind, Shape shape, std::vector<double> values,
                    std::initializer_list<const Tensor*> inputs, BackwardFn backward) {
  return record(kind, std::move(shape), std::move(values),
                std::vector<const Tensor*>(inputs), std::move(backward));
}

Tensor Tape::record(OpKind kind, Shape shape, std::vector<double> values,
                    const std::vector<const Tensor*>& inputs, BackwardFn backward) {
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  for (const Tensor* in : inputs) {
    ids.push_back(in->tape() == this ? in->node_id() : kNoNode);
  }
  auto data = std::make_shared<const std::vector<double>>(std::move(values));
  nodes_.push_back(Node{kind, std::move(ids), std::move(backward), data, shape, {}});
  return Tensor(std::move(data), std::move(shape), this, nodes_.size() - 1);
}

Tensor Tape::output_of(std::size_t node) {
  const Node& n = nodes_[node];
  return Tensor(n.value, n.shape, this, node);
}

std::vector<Tensor> Tape::gradient(const Tensor& loss, std::span<const Tensor> wrt,
                                   bool create_graph) {
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  }
  if (loss.tape() != this) {
    throw Error("backward: loss is detached from this tape");
  }
  const std::size_t end = loss.node_id() + 1;

  std::vector<char> relevant(end, 0);
  std::vector<char> target(end, 0);
  for (const Tensor& w : wrt) {
    if (w.tape() == this && w.node_id() < end) {
      relevant[w.node_id()] = 1;
      target[w.node_id()] = 1;
    }
  }
  for (std::size_t i = 0; i < end; ++i) {
    if (relevant[i]) continue;
    for (auto in : nodes_[i].inputs) {
      if (in != kNoNode && relevant[in]) {
        relevant[i] = 1;
        break;
      }
    }
  }

  std::vector<Tensor> grads(end);
  std::optional<NoGradGuard> no_grad;
  if (!create_graph) no_grad.emplace();
  grads[end - 1] = Tensor::filled(loss.shape(), 1.0);

  for (std::size_t i = end; i-- > 0;) {
    if (!relevant[i] || grads[i].empty()) continue;
    const Node& node = nodes_[i];
    if (node.kind == OpKind::leaf) continue;
    // nodes_ is a deque: references stay valid while backward rules append.
    const auto& ins = node.inputs;
    bool any = false;
    std::unique_ptr<bool[]> needs(new bool[ins.size()]);
    for (std::size_t k = 0; k < ins.size(); ++k) {
      needs[k] = ins[k] != kNoNode && relevant[ins[k]];
      any = any || needs[k];
    }
    if (!any) continue;
    Tensor out = output_of(i);
    std::vector<Tensor> gin =
        node.backward(grads[i], out, std::span<const bool>(needs.get(), ins.size()));
    for (std::size_t k = 0; k < ins.size(); ++k) {
      if (!needs[k] || gin[k].empty()) continue;
      Tensor& acc = grads[ins[k]];
      acc = acc.empty() ? std::move(gin[k]) : add(acc, gin[k]);
    }
    if (!target[i]) grads[i] = Tensor();
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (const Tensor& w : wrt) {
    if (w.tape() == this && w.node_id() < end && !grads[w.node_id()].empty()) {
      result.push_back(grads[w.node_id()]);
    } else {
      result.push_back(Tensor::zeros(w.shape()));
    }
  }
  return result;
}

GradMap Tape::backward(const Tensor& loss) {
  std::vector<Tensor> leaves;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::leaf && !nodes_[i].name.empty()) {
      leaves.push_back(output_of(i));
      names.push_back(nodes_[i].name);
    }
  }
  auto grads = gradient(loss, leaves, false);
  GradMap out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto it = out.find(names[i]);
    if (it == out.end()) {
      out.emplace(names[i], grads[i]);
    } else {
      NoGradGuard guard;
      it->second = add(it->second, grads[i]);
    }
  }
  return out;
}

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }

bool grad_recording_enabled() { return g_recording; }

void set_finite_check(bool enabled) { g_finite_check = enabled; }
bool finite_check_enabled() { return g_finite_check; }

}  // namespace rmldp
