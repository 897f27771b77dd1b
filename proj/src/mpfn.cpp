#include "rmldp/mpfn.hpp"

#include <algorithm>
#include <cmath>

#include "rmldp/ops.hpp"

namespace rmldp {

void HorizonConfig::validate() const {
  if (horizon < 1) throw ConfigError("horizon: T_f must be >= 1");
  if (window < 1) throw ConfigError("horizon: window |T_c| must be >= 1");
  if (season < 1) throw ConfigError("horizon: season S must be >= 1");
}

double target_demand(std::span<const double> series, std::size_t t_c, const HorizonConfig& cfg) {
  const std::size_t last = t_c + cfg.gap + cfg.horizon;
  if (last >= series.size()) {
    throw DataError("target_demand: series of length " + std::to_string(series.size()) +
                    " does not cover index " + std::to_string(last));
  }
  double total = 0.0;
  for (std::size_t j = t_c + cfg.gap; j <= last; ++j) total += series[j];
  return total;
}

WindowBatch make_batch(std::span<const SampleWindow> windows) {
  if (windows.empty()) throw DataError("make_batch: no windows");
  const Shape shape = windows.front().local_seq.shape();
  if (shape.size() != 2) throw ShapeError("make_batch: window sequences must be rank 2");
  const std::size_t steps = shape[0], e = shape[1], n = windows.size();
  for (const auto& w : windows) {
    if (w.local_seq.shape() != shape || w.seasonal_seq.shape() != shape) {
      throw ShapeError("make_batch: window shape " + shape_string(w.local_seq.shape()) + "/" +
                       shape_string(w.seasonal_seq.shape()) + " differs from " +
                       shape_string(shape));
    }
  }
  WindowBatch batch;
  batch.local.reserve(steps);
  batch.seasonal.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<double> local(n * e), seasonal(n * e);
    for (std::size_t i = 0; i < n; ++i) {
      const auto lv = windows[i].local_seq.values().subspan(t * e, e);
      const auto sv = windows[i].seasonal_seq.values().subspan(t * e, e);
      std::copy(lv.begin(), lv.end(), local.begin() + static_cast<std::ptrdiff_t>(i * e));
      std::copy(sv.begin(), sv.end(), seasonal.begin() + static_cast<std::ptrdiff_t>(i * e));
    }
    batch.local.emplace_back(Shape{n, e}, std::move(local));
    batch.seasonal.emplace_back(Shape{n, e}, std::move(seasonal));
  }
  std::vector<double> mask(n), target(n);
  for (std::size_t i = 0; i < n; ++i) {
    mask[i] = windows[i].seasonal_mask ? 1.0 : 0.0;
    target[i] = windows[i].target;
  }
  batch.mask = Tensor({n, 1}, std::move(mask));
  batch.target = Tensor({n, 1}, std::move(target));
  return batch;
}

Tensor window_matrix(const SampleWindow& window) {
  return concat({window.seasonal_seq, window.local_seq}, 0);
}

GruCellParams GruCellParams::from(const ParamSet& params, const std::string& prefix) {
  GruCellParams c;
  c.w_z = params.at(prefix + "w_z");
  c.w_r = params.at(prefix + "w_r");
  c.w_h = params.at(prefix + "w_h");
  c.u_z = params.at(prefix + "u_z");
  c.u_r = params.at(prefix + "u_r");
  c.u_h = params.at(prefix + "u_h");
  c.b_z = params.at(prefix + "b_z");
  c.b_r = params.at(prefix + "b_r");
  c.b_h = params.at(prefix + "b_h");
  c.validate();
  return c;
}

void GruCellParams::validate() const {
  const std::size_t h = u_z.rows(), in = w_z.cols();
  const Shape w{h, in}, u{h, h}, b{1, h};
  for (const Tensor* t : {&w_z, &w_r, &w_h}) {
    if (t->shape() != w) throw ShapeError("gru: input weight " + shape_string(t->shape()) + ", expected " + shape_string(w));
  }
  for (const Tensor* t : {&u_z, &u_r, &u_h}) {
    if (t->shape() != u) throw ShapeError("gru: recurrent weight " + shape_string(t->shape()) + ", expected " + shape_string(u));
  }
  for (const Tensor* t : {&b_z, &b_r, &b_h}) {
    if (t->shape() != b) throw ShapeError("gru: bias " + shape_string(t->shape()) + ", expected " + shape_string(b));
  }
}

MpfnParams MpfnParams::from(const ParamSet& params, const std::string& prefix) {
  MpfnParams p;
  p.local = GruCellParams::from(params, prefix + "local/");
  p.seasonal = GruCellParams::from(params, prefix + "seasonal/");
  p.head_weight = params.at(prefix + "head/w");
  p.head_bias = params.at(prefix + "head/b");
  p.validate();
  return p;
}

void MpfnParams::validate() const {
  local.validate();
  seasonal.validate();
  if (local.hidden() != seasonal.hidden() || local.input() != seasonal.input()) {
    throw ShapeError("mpfn: local and seasonal cells differ in shape");
  }
  const std::size_t out = head_weight.rows();
  if (head_weight.shape() != Shape{out, 2 * hidden()}) {
    throw ShapeError("mpfn: head weight " + shape_string(head_weight.shape()) +
                     " must have 2*hidden = " + std::to_string(2 * hidden()) + " columns");
  }
  if (head_bias.shape() != Shape{1, out}) {
    throw ShapeError("mpfn: head bias " + shape_string(head_bias.shape()) + ", expected [1x" +
                     std::to_string(out) + "]");
  }
}

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = dist(rng);
  return Tensor({rows, cols}, std::move(v));
}

}  // namespace

ParamSet init_gru(std::size_t input, std::size_t hidden, std::mt19937_64& rng,
                  const std::string& prefix) {
  ParamSet p;
  for (const char* g : {"z", "r", "h"}) {
    p.set(prefix + "w_" + g, uniform_matrix(hidden, input, rng));
    p.set(prefix + "u_" + g, uniform_matrix(hidden, hidden, rng));
    p.set(prefix + "b_" + g, Tensor::zeros({1, hidden}));
  }
  return p;
}

ParamSet init_linear(std::size_t in, std::size_t out, std::mt19937_64& rng,
                     const std::string& prefix) {
  ParamSet p;
  p.set(prefix + "w", uniform_matrix(out, in, rng));
  p.set(prefix + "b", Tensor::zeros({1, out}));
  return p;
}

ParamSet init_mpfn(const MpfnShape& shape, std::mt19937_64& rng, const std::string& prefix) {
  ParamSet p = init_gru(shape.input, shape.hidden, rng, prefix + "local/");
  p.merge(init_gru(shape.input, shape.hidden, rng, prefix + "seasonal/"));
  p.merge(init_linear(2 * shape.hidden, shape.output, rng, prefix + "head/"));
  return p;
}

Tensor gru_step(const GruCellParams& cell, const Tensor& x, const Tensor& h_prev) {
  const std::size_t h = cell.hidden();
  if (h_prev.rank() != 2 || h_prev.cols() != h) {
    throw ShapeError("gru_step: hidden state " + shape_string(h_prev.shape()) + " vs hidden " +
                     std::to_string(h));
  }
  const bool has_input = !x.empty();
  if (has_input && (x.rank() != 2 || x.cols() != cell.input() || x.rows() != h_prev.rows())) {
    throw ShapeError("gru_step: input " + shape_string(x.shape()) + " vs input dim " +
                     std::to_string(cell.input()) + " and hidden " + shape_string(h_prev.shape()));
  }
  auto pre = [&](const Tensor& w, const Tensor& u, const Tensor& b, const Tensor& state) {
    Tensor r = matmul(state, u, false, true);
    if (has_input) r = add(matmul(x, w, false, true), r);
    return add_bias(r, b);
  };
  Tensor z = sigmoid(pre(cell.w_z, cell.u_z, cell.b_z, h_prev));
  Tensor r = sigmoid(pre(cell.w_r, cell.u_r, cell.b_r, h_prev));
  Tensor c = tanh(pre(cell.w_h, cell.u_h, cell.b_h, multiply(r, h_prev)));
  return add(h_prev, multiply(z, sub(c, h_prev)));
}

Tensor gru_run(const GruCellParams& cell, std::span<const Tensor> frames) {
  if (frames.empty()) throw ShapeError("gru_run: no frames");
  Tensor h = Tensor::zeros({frames.front().rows(), cell.hidden()});
  for (const auto& x : frames) h = gru_step(cell, x, h);
  return h;
}

MpfnMode parse_mpfn_mode(const std::string& text) {
  if (text == "full") return MpfnMode::full;
  if (text == "local_only") return MpfnMode::local_only;
  if (text == "seasonal_only") return MpfnMode::seasonal_only;
  throw ConfigError("unknown mpfn mode '" + text + "'");
}

const char* to_string(MpfnMode mode) {
  switch (mode) {
    case MpfnMode::full: return "full";
    case MpfnMode::local_only: return "local_only";
    case MpfnMode::seasonal_only: return "seasonal_only";
  }
  return "?";
}

Tensor mpfn_features(const MpfnParams& params, const WindowBatch& batch, MpfnMode mode) {
  const std::size_t n = batch.size(), h = params.hidden();
  if (batch.features() != params.local.input()) {
    throw ShapeError("mpfn: batch frames have " + std::to_string(batch.features()) +
                     " features, model expects " + std::to_string(params.local.input()));
  }
  const auto mask = batch.mask.values();
  const bool any_seasonal = std::any_of(mask.begin(), mask.end(), [](double m) { return m != 0.0; });
  const bool all_seasonal = std::all_of(mask.begin(), mask.end(), [](double m) { return m != 0.0; });

  Tensor seasonal = Tensor::zeros({n, h});
  if (mode != MpfnMode::local_only && any_seasonal) {
    seasonal = gru_run(params.seasonal, batch.seasonal);
    if (!all_seasonal) {
      std::vector<double> m(n * h);
      for (std::size_t i = 0; i < n; ++i) std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(i * h), h, mask[i]);
      seasonal = multiply(seasonal, Tensor({n, h}, std::move(m)));
    }
  }
  Tensor local = mode == MpfnMode::seasonal_only ? Tensor::zeros({n, h})
                                                  : gru_run(params.local, batch.local);
  return concat({seasonal, local}, 1);
}

Tensor mpfn_forward(const MpfnParams& params, const WindowBatch& batch, MpfnMode mode) {
  return add_bias(matmul(mpfn_features(params, batch, mode), params.head_weight, false, true),
                  params.head_bias);
}

double mpfn_forward(const MpfnParams& params, const SampleWindow& window, MpfnMode mode) {
  NoGradGuard guard;
  return mpfn_forward(params, make_batch(std::span(&window, 1)), mode).item();
}

Tensor mpfn_loss(const MpfnParams& params, const WindowBatch& batch, MpfnMode mode,
                 LossReduction reduction) {
  if (batch.size() == 0) throw DataError("mpfn_loss: empty batch");
  if (params.outputs() != 1) throw ShapeError("mpfn_loss: head must have a single output");
  Tensor loss = mse(mpfn_forward(params, batch, mode), batch.target);
  if (reduction == LossReduction::sum) loss = scale(loss, static_cast<double>(batch.size()));
  return loss;
}

SegmentScaler SegmentScaler::fit(std::span<const SampleWindow> train, std::size_t horizon,
                                 const ScalerFloors& floors) {
  if (train.empty()) throw DataError("SegmentScaler: no training windows");
  const std::size_t e = train.front().local_seq.cols();
  std::vector<double> sum(e, 0.0), sq(e, 0.0), abs_sum(e, 0.0);
  std::size_t count = 0;
  auto accumulate = [&](const Tensor& seq) {
    const auto& v = seq.values();
    for (std::size_t r = 0; r < seq.rows(); ++r) {
      for (std::size_t k = 0; k < e; ++k) {
        double x = v[r * e + k];
        if (k == 0) x = std::log1p(std::max(0.0, x));
        sum[k] += x;
        sq[k] += x * x;
        abs_sum[k] += std::abs(x);
      }
      ++count;
    }
  };
  for (const auto& w : train) {
    accumulate(w.local_seq);
    if (w.seasonal_mask) accumulate(w.seasonal_seq);
  }
  SegmentScaler s;
  s.mean_.resize(e);
  s.std_.resize(e);
  const double n = static_cast<double>(count);
  for (std::size_t k = 0; k < e; ++k) {
    const double m = sum[k] / n;
    const double floor = k == 0 ? floors.log_demand : floors.relative * abs_sum[k] / n;
    const double sd = std::max(std::sqrt(std::max(0.0, sq[k] / n - m * m)), floor);
    s.mean_[k] = m;
    s.std_[k] = sd < 1e-6 ? 1.0 : sd;
  }
  s.days_ = static_cast<double>(horizon + 1);
  return s;
}

SampleWindow SegmentScaler::transform(const SampleWindow& window) const {
  const std::size_t e = mean_.size();
  auto scale_seq = [&](const Tensor& seq) {
    if (seq.cols() != e) throw ShapeError("SegmentScaler: frame width mismatch");
    std::vector<double> v(seq.values().begin(), seq.values().end());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::size_t k = i % e;
      const double x = k == 0 ? std::log1p(std::max(0.0, v[i])) : v[i];
      v[i] = (x - mean_[k]) / std_[k];
    }
    return Tensor(seq.shape(), std::move(v));
  };
  SampleWindow out = window;
  out.local_seq = scale_seq(window.local_seq);
  out.seasonal_seq = window.seasonal_mask ? scale_seq(window.seasonal_seq)
                                          : Tensor::zeros(window.seasonal_seq.shape());
  out.target = transform_target(window.target);
  return out;
}

std::vector<SampleWindow> SegmentScaler::transform(std::span<const SampleWindow> windows) const {
  std::vector<SampleWindow> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(transform(w));
  return out;
}

double SegmentScaler::transform_target(double y) const {
  return (std::log1p(std::max(0.0, y) / days_) - mean_.at(0)) / std_.at(0);
}

double SegmentScaler::inverse_target(double z) const {
  return std::max(0.0, days_ * std::expm1(z * std_.at(0) + mean_.at(0)));
}

}  // namespace rmldp
