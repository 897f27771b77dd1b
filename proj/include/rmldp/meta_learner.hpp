#pragma once

// Relation-aware meta-learning: the shared initialization theta0 is gated per
// segment by sigma(W_m [q^d, q^g] + b_m), adapted with plain gradient steps on
// the segment's training windows, and scored on its test windows.
//
// All trainable state lives in one ParamSet with the prefixes theta0/ (an MPFN
// under theta0/mpfn/), enc/ and dec/ (segment encoder), graphhead/ and mod/.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rmldp/mpfn.hpp"
#include "rmldp/optimizer.hpp"

namespace rmldp {

enum class Ablation { full, no_d, no_g, szn, local };
enum class GateMode { learned, identity, forced_one };
enum class ModulationLayout { elementwise, per_tensor };
enum class MetaGradient { first_order, second_order };

Ablation parse_ablation(const std::string& text);
const char* to_string(Ablation a);
GateMode parse_gate_mode(const std::string& text);
const char* to_string(GateMode g);
ModulationLayout parse_modulation_layout(const std::string& text);
const char* to_string(ModulationLayout m);
MetaGradient parse_meta_gradient(const std::string& text);
const char* to_string(MetaGradient m);

/// Base-model branch configuration implied by an ablation.
MpfnMode mpfn_mode(Ablation a);
bool uses_data_repr(Ablation a);
bool uses_graph_repr(Ablation a);

struct MetaConfig {
  double alpha = 1e-4;
  double beta = 1e-3;
  double lambda = 0.5;
  std::size_t inner_steps = 1;
  std::size_t meta_batch = 128;
  Ablation ablation = Ablation::full;
  GateMode gate = GateMode::learned;
  ModulationLayout layout = ModulationLayout::elementwise;
  MetaGradient order = MetaGradient::first_order;
  OptimizerKind outer = OptimizerKind::adam;
  LossReduction reduction = LossReduction::mean;

  void validate() const;
};

struct ModelDims {
  std::size_t features = 48;  // e
  std::size_t hidden = 128;
  std::size_t d_q = 32;
  std::size_t d_g = 16;
  std::size_t d_walk = 32;
};

/// A segment's raw windows before per-segment normalization.
struct Episode {
  std::string segment_id;
  std::string category;
  std::vector<SampleWindow> d_tr;
  std::vector<SampleWindow> d_te;
  std::optional<std::vector<double>> graph_vector;
};

/// Normalized batches and the scaler that produced them.
struct PreparedEpisode {
  std::string segment_id;
  std::string category;
  SegmentScaler scaler;
  WindowBatch train;
  WindowBatch test;
  std::vector<double> test_targets;  // demand units
  Tensor graph_vector;               // 1 x d_walk, empty if absent
};

/// `fallback_graph` is used when the episode has no graph vector.
PreparedEpisode prepare_episode(const Episode& episode, std::size_t horizon,
                                const std::vector<double>& fallback_graph = {});

/// Concatenation q^d then q^g (both 1 x n rows).
Tensor fuse_repr(const Tensor& qd, const Tensor& qg);

/// Gate weights under mod/: w is (gate size) x q_dim, b is 1 x (gate size).
/// Gate size is theta0's flattened size (elementwise) or its tensor count.
ParamSet init_modulation(const ParamSet& theta0, std::size_t q_dim, ModulationLayout layout,
                         std::mt19937_64& rng);

/// theta0 scaled by sigma(q W' + b), with names and shapes of theta0.
ParamSet modulate(const ParamSet& mod, const Tensor& q, const ParamSet& theta0,
                  ModulationLayout layout = ModulationLayout::elementwise);

/// Entrywise product of every tensor in theta0 with the matching slice of a
/// 1 x (gate size) gate row.
ParamSet apply_gate(const Tensor& gate, const ParamSet& theta0, ModulationLayout layout);

using LossFn = std::function<Tensor(const ParamSet&)>;

/// K plain gradient-descent steps theta <- theta - alpha * grad loss(theta).
/// If theta is tracked, the steps are recorded on its tape; first_order treats
/// each inner gradient as a constant, second_order keeps it differentiable.
ParamSet inner_adapt(const ParamSet& theta, const LossFn& loss, double alpha, std::size_t steps,
                     MetaGradient order = MetaGradient::first_order);
/// inner_adapt on mpfn_loss over `d_tr`; names are those of an "mpfn/" set.
ParamSet inner_adapt(const ParamSet& theta, const WindowBatch& d_tr, double alpha,
                     std::size_t steps, MpfnMode mode, MetaGradient order = MetaGradient::first_order,
                     LossReduction reduction = LossReduction::mean);

/// Builds every parameter the configured method needs. theta0 is drawn from
/// its own stream of `seed` so that methods sharing theta0 start identically.
ParamSet init_meta_params(const ModelDims& dims, const MetaConfig& cfg, std::uint64_t seed);

struct EpisodeOutcome {
  Tensor test_loss;
  Tensor reconstruction;  // empty when the encoder is unused
  Tensor representation;  // q fed to the gate, empty without one
  ParamSet theta_init;    // theta_0i under "mpfn/"
  ParamSet theta_adapted; // theta_i under "mpfn/"
};

/// Forward pass of one episode: representation, gate, inner loop, test loss.
EpisodeOutcome run_episode(const ParamSet& meta, const PreparedEpisode& episode,
                           const MetaConfig& cfg);

struct MetaStepResult {
  double joint_loss = 0.0;   // sum of test losses + lambda * mean reconstruction
  double test_loss = 0.0;    // sum of test losses
  double reconstruction = 0.0;  // mean reconstruction
};

/// L_joint over the batch and its gradient with respect to every entry of meta.
Tensor joint_loss(const ParamSet& meta, std::span<const PreparedEpisode> batch,
                  const MetaConfig& cfg, MetaStepResult* parts = nullptr);

/// One outer update of every entry of `meta` at learning rate beta.
MetaStepResult meta_train_step(ParamSet& meta, std::span<const PreparedEpisode> batch,
                               const MetaConfig& cfg, OptimizerState& state);

struct AdaptResult {
  ParamSet theta;                   // adapted, under "mpfn/"
  std::vector<double> predictions;  // demand units, one per test window
  std::vector<double> representation;  // q, empty for the identity gate
};

AdaptResult meta_test_adapt(const ParamSet& meta, const PreparedEpisode& episode,
                            const MetaConfig& cfg);

/// Named slices of meta.
ParamSet theta0_of(const ParamSet& meta);

}  // namespace rmldp
