#include "rmldp/meta_learner.hpp"

#include <algorithm>

#include "rmldp/ops.hpp"
#include "rmldp/relation.hpp"

namespace rmldp {

namespace {

template <class E, std::size_t N>
E parse_enum(const std::string& text, const char* what,
             const std::pair<const char*, E> (&table)[N]) {
  for (const auto& [name, value] : table) {
    if (text == name) return value;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + text + "'");
}

template <class E, std::size_t N>
const char* enum_name(E value, const std::pair<const char*, E> (&table)[N]) {
  for (const auto& [name, v] : table) {
    if (v == value) return name;
  }
  return "?";
}

constexpr std::pair<const char*, Ablation> kAblations[] = {
    {"full", Ablation::full}, {"no_d", Ablation::no_d}, {"no_g", Ablation::no_g},
    {"szn", Ablation::szn},   {"local", Ablation::local}};
constexpr std::pair<const char*, GateMode> kGates[] = {
    {"learned", GateMode::learned}, {"identity", GateMode::identity},
    {"forced_one", GateMode::forced_one}};
constexpr std::pair<const char*, ModulationLayout> kLayouts[] = {
    {"elementwise", ModulationLayout::elementwise}, {"per_tensor", ModulationLayout::per_tensor}};
constexpr std::pair<const char*, MetaGradient> kOrders[] = {
    {"first", MetaGradient::first_order}, {"second", MetaGradient::second_order}};

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
  return std::mt19937_64(seq);
}

std::size_t gate_size(const ParamSet& theta0, ModulationLayout layout) {
  return layout == ModulationLayout::elementwise ? theta0.total_dim() : theta0.size();
}

}  // namespace

Ablation parse_ablation(const std::string& text) { return parse_enum(text, "ablation", kAblations); }
const char* to_string(Ablation a) { return enum_name(a, kAblations); }
GateMode parse_gate_mode(const std::string& text) { return parse_enum(text, "gate mode", kGates); }
const char* to_string(GateMode g) { return enum_name(g, kGates); }
ModulationLayout parse_modulation_layout(const std::string& text) {
  return parse_enum(text, "modulation layout", kLayouts);
}
const char* to_string(ModulationLayout m) { return enum_name(m, kLayouts); }
MetaGradient parse_meta_gradient(const std::string& text) {
  return parse_enum(text, "meta-gradient order", kOrders);
}
const char* to_string(MetaGradient m) { return enum_name(m, kOrders); }

MpfnMode mpfn_mode(Ablation a) {
  switch (a) {
    case Ablation::szn: return MpfnMode::local_only;
    case Ablation::local: return MpfnMode::seasonal_only;
    default: return MpfnMode::full;
  }
}

bool uses_data_repr(Ablation a) { return a != Ablation::no_d; }
bool uses_graph_repr(Ablation a) { return a != Ablation::no_g; }

void MetaConfig::validate() const {
  if (!(alpha >= 0)) throw ConfigError("meta.alpha must be >= 0");
  if (!(beta > 0)) throw ConfigError("meta.beta must be > 0");
  if (!(lambda >= 0)) throw ConfigError("meta.lambda must be >= 0");
  if (meta_batch == 0) throw ConfigError("meta.batch must be >= 1");
}

PreparedEpisode prepare_episode(const Episode& episode, std::size_t horizon,
                                const std::vector<double>& fallback_graph) {
  if (episode.d_tr.empty()) throw DataError("episode " + episode.segment_id + ": empty D^tr");
  PreparedEpisode p;
  p.segment_id = episode.segment_id;
  p.category = episode.category;
  p.scaler = SegmentScaler::fit(episode.d_tr, horizon);
  p.train = make_batch(p.scaler.transform(std::span<const SampleWindow>(episode.d_tr)));
  if (!episode.d_te.empty()) {
    p.test = make_batch(p.scaler.transform(std::span<const SampleWindow>(episode.d_te)));
  }
  for (const auto& w : episode.d_te) p.test_targets.push_back(w.target);
  const auto& g = episode.graph_vector ? *episode.graph_vector : fallback_graph;
  if (!g.empty()) p.graph_vector = Tensor::row(g);
  return p;
}

Tensor fuse_repr(const Tensor& qd, const Tensor& qg) {
  if (qd.rank() != 2 || qg.rank() != 2 || qd.rows() != 1 || qg.rows() != 1) {
    throw ShapeError("fuse_repr: expected 1 x n rows, got " + shape_string(qd.shape()) + " and " +
                     shape_string(qg.shape()));
  }
  return concat({qd, qg}, 1);
}

ParamSet init_modulation(const ParamSet& theta0, std::size_t q_dim, ModulationLayout layout,
                         std::mt19937_64& rng) {
  return init_linear(q_dim, gate_size(theta0, layout), rng, "mod/");
}

ParamSet apply_gate(const Tensor& gate, const ParamSet& theta0, ModulationLayout layout) {
  const std::size_t expected = gate_size(theta0, layout);
  if (gate.shape() != Shape{1, expected}) {
    throw ShapeError("modulate: gate " + shape_string(gate.shape()) + " vs [1x" +
                     std::to_string(expected) + "]");
  }
  ParamSet out;
  std::size_t offset = 0;
  for (const auto& [name, t] : theta0) {
    Tensor g;
    if (layout == ModulationLayout::elementwise) {
      g = reshape(block(gate, 0, offset, 1, t.size()), t.shape());
      offset += t.size();
    } else {
      g = expand(block(gate, 0, offset, 1, 1), t.shape());
      offset += 1;
    }
    out.set(name, multiply(g, t));
  }
  return out;
}

ParamSet modulate(const ParamSet& mod, const Tensor& q, const ParamSet& theta0,
                  ModulationLayout layout) {
  const Tensor& w = mod.at("mod/w");
  if (q.rank() != 2 || q.rows() != 1 || q.cols() != w.cols()) {
    throw ShapeError("modulate: representation " + shape_string(q.shape()) + " vs weight " +
                     shape_string(w.shape()));
  }
  Tensor gate = sigmoid(add_bias(matmul(q, w, false, true), mod.at("mod/b")));
  return apply_gate(gate, theta0, layout);
}

ParamSet inner_adapt(const ParamSet& theta, const LossFn& loss, double alpha, std::size_t steps,
                     MetaGradient order) {
  if (!(alpha >= 0)) throw ConfigError("inner_adapt: alpha must be >= 0");
  ParamSet current = theta;
  for (std::size_t k = 0; k < steps; ++k) {
    std::size_t tracked = 0;
    Tape* tape = nullptr;
    for (const auto& [name, t] : current) {
      if (t.requires_grad()) {
        ++tracked;
        tape = t.tape();
      }
    }
    if (tracked != 0 && tracked != current.size()) {
      throw Error("inner_adapt: parameters are partially tracked");
    }
    std::vector<std::string> names = current.names();
    std::vector<Tensor> wrt, grads;
    ParamSet next;
    if (tape) {
      for (const auto& n : names) wrt.push_back(current.at(n));
      grads = tape->gradient(loss(current), wrt, order == MetaGradient::second_order);
      for (std::size_t i = 0; i < names.size(); ++i) {
        next.set(names[i], sub(wrt[i], scale(grads[i], alpha)));
      }
    } else {
      Tape local;
      ParamSet watched = current.watched(local);
      for (const auto& n : names) wrt.push_back(watched.at(n));
      grads = local.gradient(loss(watched), wrt);
      for (std::size_t i = 0; i < names.size(); ++i) {
        next.set(names[i], sub(current.at(names[i]), scale(grads[i], alpha)));
      }
    }
    current = std::move(next);
  }
  return current;
}

ParamSet inner_adapt(const ParamSet& theta, const WindowBatch& d_tr, double alpha,
                     std::size_t steps, MpfnMode mode, MetaGradient order,
                     LossReduction reduction) {
  if (steps > 0 && d_tr.size() == 0) throw DataError("inner_adapt: empty training set");
  return inner_adapt(
      theta, [&](const ParamSet& p) { return mpfn_loss(MpfnParams::from(p), d_tr, mode, reduction); },
      alpha, steps, order);
}

ParamSet init_meta_params(const ModelDims& dims, const MetaConfig& cfg, std::uint64_t seed) {
  auto theta_rng = stream(seed, 1);
  ParamSet theta0 = init_mpfn({dims.features, dims.hidden, 1}, theta_rng, "mpfn/");
  ParamSet meta = theta0.add_prefix("theta0/");
  if (cfg.gate == GateMode::identity) return meta;

  std::size_t q_dim = 0;
  if (uses_data_repr(cfg.ablation)) {
    auto rng = stream(seed, 2);
    meta.merge(init_segment_encoder({dims.features, dims.hidden, dims.d_q, dims.hidden}, rng));
    q_dim += dims.d_q;
  }
  if (uses_graph_repr(cfg.ablation)) {
    auto rng = stream(seed, 3);
    meta.merge(init_graph_head(dims.d_walk, dims.d_g, rng));
    q_dim += dims.d_g;
  }
  auto rng = stream(seed, 4);
  meta.merge(init_modulation(theta0, q_dim, cfg.layout, rng));
  return meta;
}

ParamSet theta0_of(const ParamSet& meta) { return meta.strip_prefix("theta0/"); }

namespace {

/// Everything in an episode except the test loss.
EpisodeOutcome adapt_episode(const ParamSet& meta, const PreparedEpisode& episode,
                             const MetaConfig& cfg) {
  EpisodeOutcome out;
  const ParamSet theta0 = theta0_of(meta);
  if (cfg.gate == GateMode::identity) {
    out.theta_init = theta0;
  } else {
    std::vector<Tensor> parts;
    if (uses_data_repr(cfg.ablation)) {
      SegmentEncoding enc = encode_with_reconstruction(meta, episode.train);
      parts.push_back(enc.code);
      out.reconstruction = enc.reconstruction;
    }
    if (uses_graph_repr(cfg.ablation)) {
      if (episode.graph_vector.empty()) throw DataError("no graph vector");
      parts.push_back(graph_repr(meta, episode.graph_vector));
    }
    if (!parts.empty()) out.representation = parts.size() == 2 ? fuse_repr(parts[0], parts[1]) : parts[0];
    if (cfg.gate == GateMode::forced_one) {
      out.theta_init = apply_gate(Tensor::filled({1, gate_size(theta0, cfg.layout)}, 1.0), theta0,
                                  cfg.layout);
    } else {
      if (parts.empty()) throw ConfigError("learned gate without a representation");
      out.theta_init = modulate(meta, out.representation, theta0, cfg.layout);
    }
  }
  out.theta_adapted = inner_adapt(out.theta_init, episode.train, cfg.alpha, cfg.inner_steps,
                                  mpfn_mode(cfg.ablation), cfg.order, cfg.reduction);
  return out;
}

}  // namespace

EpisodeOutcome run_episode(const ParamSet& meta, const PreparedEpisode& episode,
                           const MetaConfig& cfg) {
  if (episode.test.size() == 0) throw DataError("empty D^te");
  EpisodeOutcome out = adapt_episode(meta, episode, cfg);
  out.test_loss = mpfn_loss(MpfnParams::from(out.theta_adapted), episode.test,
                            mpfn_mode(cfg.ablation), cfg.reduction);
  return out;
}

namespace {

EpisodeOutcome run_episode_checked(const ParamSet& meta, const PreparedEpisode& episode,
                                   const MetaConfig& cfg) {
  try {
    return run_episode(meta, episode, cfg);
  } catch (const Error& e) {
    throw DataError("episode " + episode.segment_id + ": " + e.what());
  }
}

}  // namespace

Tensor joint_loss(const ParamSet& meta, std::span<const PreparedEpisode> batch,
                  const MetaConfig& cfg, MetaStepResult* parts) {
  if (batch.empty()) throw DataError("meta batch is empty");
  Tensor test_sum, rec_sum;
  for (const auto& ep : batch) {
    EpisodeOutcome o = run_episode_checked(meta, ep, cfg);
    test_sum = test_sum.empty() ? o.test_loss : add(test_sum, o.test_loss);
    if (!o.reconstruction.empty()) {
      rec_sum = rec_sum.empty() ? o.reconstruction : add(rec_sum, o.reconstruction);
    }
  }
  Tensor total = test_sum;
  Tensor rec_mean;
  if (!rec_sum.empty()) {
    rec_mean = scale(rec_sum, 1.0 / static_cast<double>(batch.size()));
    total = add(total, scale(rec_mean, cfg.lambda));
  }
  if (parts) {
    parts->joint_loss = total.item();
    parts->test_loss = test_sum.item();
    parts->reconstruction = rec_mean.empty() ? 0.0 : rec_mean.item();
  }
  return total;
}

MetaStepResult meta_train_step(ParamSet& meta, std::span<const PreparedEpisode> batch,
                               const MetaConfig& cfg, OptimizerState& state) {
  if (batch.empty()) throw DataError("meta batch is empty");
  const double rec_weight = cfg.lambda / static_cast<double>(batch.size());
  GradMap total;
  double test_sum = 0.0, rec_sum = 0.0;
  bool has_rec = false;
  for (const auto& ep : batch) {
    Tape tape;
    EpisodeOutcome o = run_episode_checked(meta.watched(tape), ep, cfg);
    Tensor loss = o.test_loss;
    test_sum += o.test_loss.item();
    if (!o.reconstruction.empty()) {
      has_rec = true;
      rec_sum += o.reconstruction.item();
      loss = add(loss, scale(o.reconstruction, rec_weight));
    }
    GradMap grads = tape.backward(loss);
    NoGradGuard guard;
    for (auto& [name, g] : grads) {
      auto it = total.find(name);
      if (it == total.end()) {
        total.emplace(name, g.detach());
      } else {
        it->second = add(it->second, g);
      }
    }
  }
  meta = optimizer_step(cfg.outer, meta, total, cfg.beta, state);
  MetaStepResult r;
  r.test_loss = test_sum;
  r.reconstruction = has_rec ? rec_sum / static_cast<double>(batch.size()) : 0.0;
  r.joint_loss = r.test_loss + cfg.lambda * r.reconstruction;
  return r;
}

AdaptResult meta_test_adapt(const ParamSet& meta, const PreparedEpisode& episode,
                            const MetaConfig& cfg) {
  if (episode.train.size() == 0) throw DataError("meta_test_adapt: empty adaptation set");
  EpisodeOutcome o;
  try {
    o = adapt_episode(meta.detached(), episode, cfg);
  } catch (const Error& e) {
    throw DataError("episode " + episode.segment_id + ": " + e.what());
  }
  AdaptResult r;
  r.theta = o.theta_adapted;
  if (!o.representation.empty()) {
    const auto& q = o.representation.values();
    r.representation.assign(q.begin(), q.end());
  }
  if (episode.test.size() > 0) {
    NoGradGuard guard;
    Tensor pred = mpfn_forward(MpfnParams::from(r.theta), episode.test, mpfn_mode(cfg.ablation));
    for (std::size_t i = 0; i < pred.size(); ++i) {
      r.predictions.push_back(episode.scaler.inverse_target(pred[i]));
    }
  }
  return r;
}

}  // namespace rmldp
