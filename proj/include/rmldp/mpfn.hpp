#pragma once

// Dual-branch GRU forecaster: a local branch over the most recent |T_c| frames
// and a seasonal branch over the frames ending one season before the target,
// fused by concatenation (seasonal first) into a linear head.

#include <random>
#include <span>
#include <string>
#include <vector>

#include "rmldp/param_set.hpp"

namespace rmldp {

struct HorizonConfig {
  std::size_t gap = 14;          // T_g
  std::size_t horizon = 30;      // T_f
  std::size_t season = 365;      // S
  std::size_t window = 30;       // |T_c|

  void validate() const;
};

/// Inclusive sum of series[t_c + T_g .. t_c + T_g + T_f] (T_f + 1 terms).
double target_demand(std::span<const double> series, std::size_t t_c, const HorizonConfig& cfg);

/// One training example. Frames are rows: demand first, then external features.
struct SampleWindow {
  Tensor local_seq;      // |T_c| x e
  Tensor seasonal_seq;   // |T_c| x e, zeros when the mask is false
  bool seasonal_mask = true;
  double target = 0.0;
  std::size_t t_c = 0;
};

/// Windows regrouped per time step so the GRU runs over the whole batch at once.
struct WindowBatch {
  std::vector<Tensor> local;     // |T_c| tensors of N x e
  std::vector<Tensor> seasonal;  // |T_c| tensors of N x e
  Tensor mask;                   // N x 1, 1 where seasonal history exists
  Tensor target;                 // N x 1
  std::size_t size() const { return target.empty() ? 0 : target.rows(); }
  std::size_t steps() const { return local.size(); }
  std::size_t features() const { return local.empty() ? 0 : local.front().cols(); }
};

WindowBatch make_batch(std::span<const SampleWindow> windows);

/// Row-major 2|T_c| x e matrix per window, seasonal frames first.
Tensor window_matrix(const SampleWindow& window);

struct GruCellParams {
  Tensor w_z, w_r, w_h;  // hidden x input
  Tensor u_z, u_r, u_h;  // hidden x hidden
  Tensor b_z, b_r, b_h;  // 1 x hidden

  static GruCellParams from(const ParamSet& params, const std::string& prefix);
  std::size_t hidden() const { return u_z.rows(); }
  std::size_t input() const { return w_z.cols(); }
  void validate() const;
};

struct MpfnParams {
  GruCellParams local;        // GRU^r
  GruCellParams seasonal;     // GRU^l
  Tensor head_weight;         // out x 2*hidden
  Tensor head_bias;           // 1 x out

  static MpfnParams from(const ParamSet& params, const std::string& prefix = "mpfn/");
  std::size_t hidden() const { return local.hidden(); }
  std::size_t outputs() const { return head_weight.rows(); }
  void validate() const;
};

struct MpfnShape {
  std::size_t input = 48;
  std::size_t hidden = 128;
  std::size_t output = 1;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
/// Names: <prefix>{local,seasonal}/{w,u,b}_{z,r,h}, <prefix>head/{w,b}.
ParamSet init_mpfn(const MpfnShape& shape, std::mt19937_64& rng, const std::string& prefix = "mpfn/");
/// A GRU cell alone, under <prefix>{w,u,b}_{z,r,h}.
ParamSet init_gru(std::size_t input, std::size_t hidden, std::mt19937_64& rng,
                  const std::string& prefix);
/// Uniform-initialized out x in weight and zero 1 x out bias under <prefix>{w,b}.
ParamSet init_linear(std::size_t in, std::size_t out, std::mt19937_64& rng,
                     const std::string& prefix);

/// z = s(x Wz' + h Uz' + bz), r = s(x Wr' + h Ur' + br),
/// c = tanh(x Wh' + (r*h) Uh' + bh), h' = (1-z)*h + z*c.
/// Rows of x and h_prev are independent samples. An empty x means zero input.
Tensor gru_step(const GruCellParams& cell, const Tensor& x, const Tensor& h_prev);

/// Final hidden state after running the cell over `frames` from h_0 = 0.
Tensor gru_run(const GruCellParams& cell, std::span<const Tensor> frames);

enum class MpfnMode { full, local_only, seasonal_only };

MpfnMode parse_mpfn_mode(const std::string& text);
const char* to_string(MpfnMode mode);

/// Fused seasonal-then-local hidden state, N x 2*hidden, after mode and mask.
Tensor mpfn_features(const MpfnParams& params, const WindowBatch& batch, MpfnMode mode);

/// Head output per window, N x outputs.
Tensor mpfn_forward(const MpfnParams& params, const WindowBatch& batch, MpfnMode mode);
double mpfn_forward(const MpfnParams& params, const SampleWindow& window, MpfnMode mode);

enum class LossReduction { mean, sum };

/// Squared error of the scalar head against batch targets.
Tensor mpfn_loss(const MpfnParams& params, const WindowBatch& batch, MpfnMode mode,
                 LossReduction reduction = LossReduction::mean);

/// Lower bounds on the fitted standard deviations. A few consecutive windows
/// span only weeks, so unfloored statistics blow test inputs up.
struct ScalerFloors {
  double log_demand = 0.2;  // absolute, in log1p units
  double relative = 0.2;    // other channels, times the mean |x|
};

/// Per-channel z-score fitted on the frames of training windows (seasonal
/// frames included where present); the demand channel (column 0) is
/// log1p-transformed first. Targets are mapped as log1p(y / (T_f + 1)) and
/// z-scored with the demand channel statistics.
class SegmentScaler {
 public:
  SegmentScaler() = default;
  static SegmentScaler fit(std::span<const SampleWindow> train, std::size_t horizon,
                           const ScalerFloors& floors = {});

  SampleWindow transform(const SampleWindow& window) const;
  std::vector<SampleWindow> transform(std::span<const SampleWindow> windows) const;
  double transform_target(double y) const;
  /// Inverse of transform_target, clamped at zero demand.
  double inverse_target(double z) const;

  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return std_; }

 private:
  std::vector<double> mean_;
  std::vector<double> std_;
  double days_ = 1.0;
};

}  // namespace rmldp
