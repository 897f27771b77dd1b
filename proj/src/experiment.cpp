#include <algorithm>
#include <chrono>

#include <spdlog/spdlog.h>

#include "rmldp/checkpoint.hpp"
#include "rmldp/error.hpp"
#include "rmldp/harness.hpp"
#include "rmldp/ops.hpp"

namespace rmldp {

namespace {

enum Stream : std::uint32_t { kEpisodes = 100, kPooled = 101 };

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  return std::mt19937_64(seq);
}

void attach_graph(Episode& ep, const NodeEmbedding& embedding) {
  auto it = embedding.find(ep.segment_id);
  if (it != embedding.end()) ep.graph_vector = it->second;
}

/// Source episodes for one outer step, drawn uniformly over source segments.
std::vector<PreparedEpisode> sample_batch(const Study& study, const ExperimentConfig& cfg,
                                          std::size_t size, std::mt19937_64& rng) {
  const auto& sources = study.split.source;
  if (sources.empty()) throw DataError("no source segments to meta-train on");
  std::uniform_int_distribution<std::size_t> pick(0, sources.size() - 1);
  std::vector<PreparedEpisode> batch;
  batch.reserve(size);
  for (std::size_t b = 0; b < size; ++b) {
    Episode ep = sample_episode(*sources[pick(rng)], study.horizon, cfg.layout.train_source,
                                cfg.layout.test_source, rng);
    attach_graph(ep, study.embedding);
    batch.push_back(study.prepare(ep));
  }
  return batch;
}

std::string seed_text(std::uint64_t seed) { return std::to_string(seed); }

template <class F>
auto stage(const char* name, std::uint64_t seed, const ExperimentConfig& cfg, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(std::string("stage ") + name + " (seed " + seed_text(seed) + "): " + e.what() +
                "\nconfig:\n" + config_echo(cfg));
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

SyntheticWorld load_world(const ExperimentConfig& cfg, std::uint64_t seed) {
  SyntheticWorld world;
  if (!cfg.demand_path.empty()) {
    world = read_demand(cfg.demand_path);
    world.orders = read_orders(cfg.orders_path);
  } else {
    GeneratorConfig g = cfg.gen;
    g.seed = seed;
    g.season = cfg.horizon.season;
    g.feature_dim = cfg.dims.features;
    world = generate_world(g);
  }
  for (const auto& s : world.segments) {
    if (s.features() != cfg.dims.features) {
      throw ConfigError("segment " + s.id + " has " + std::to_string(s.features()) +
                        " channels but model.e is " + std::to_string(cfg.dims.features));
    }
  }
  return world;
}

NodeEmbedding embed_segments(const SyntheticWorld& world, const ExperimentConfig& cfg,
                             std::uint64_t seed) {
  std::set<std::string> universe;
  for (const auto& s : world.segments) universe.insert(s.id);
  SegmentGraph graph = build_cooccurrence(world.orders, universe);
  if (cfg.graph_percentile > 0) graph = threshold_filter(graph, cfg.graph_percentile);
  DeepWalkConfig walk = cfg.walk;
  walk.dim = cfg.dims.d_walk;
  walk.seed = seed;
  return deepwalk_embed(graph, walk);
}

Study::Study(const ExperimentConfig& cfg, std::uint64_t seed_, std::size_t window)
    : seed(seed_), horizon(cfg.horizon) {
  horizon.window = window;
  world = load_world(cfg, seed);
  split = make_episodes(world, horizon, cfg.split, cfg.layout);
  for (const auto& x : split.excluded) spdlog::warn("excluded segment {}: {}", x.segment_id, x.reason);
  embedding = embed_segments(world, cfg, seed);
  fallback_graph = mean_embedding(embedding);
  for (auto& ep : split.target) attach_graph(ep, embedding);
}

const SegmentSeries& Study::series(const std::string& id) const {
  for (const auto& s : world.segments) {
    if (s.id == id) return s;
  }
  throw DataError("unknown segment '" + id + "'");
}

PreparedEpisode Study::prepare(const Episode& ep) const {
  return prepare_episode(ep, horizon.horizon, fallback_graph);
}

MetaConfig method_config(const ExperimentConfig& cfg, const Method& method) {
  MetaConfig mc = cfg.meta;
  if (method.kind == Method::Kind::rmldp) {
    mc.ablation = method.ablation;
    mc.gate = GateMode::learned;
  } else {
    mc.ablation = Ablation::full;
    mc.gate = GateMode::identity;
  }
  return mc;
}

ParamSet train_meta(const Study& study, const ExperimentConfig& cfg, const Method& method) {
  const MetaConfig mc = method_config(cfg, method);
  ParamSet meta = init_meta_params(cfg.dims, mc, study.seed);
  OptimizerState state;
  std::mt19937_64 rng = stream(study.seed, kEpisodes);
  for (std::size_t step = 0; step < cfg.train_steps; ++step) {
    const auto batch = sample_batch(study, cfg, mc.meta_batch, rng);
    const MetaStepResult r = meta_train_step(meta, batch, mc, state);
    if ((step + 1) % 100 == 0 || step + 1 == cfg.train_steps) {
      spdlog::debug("{} step {} joint {:.5f} test {:.5f} rec {:.5f}", method.name(), step + 1,
                    r.joint_loss, r.test_loss, r.reconstruction);
    }
  }
  return meta;
}

ParamSet train_pooled(const Study& study, const ExperimentConfig& cfg) {
  const MetaConfig mc = method_config(cfg, Method::of(Baseline::maml));
  ParamSet params = init_meta_params(cfg.dims, mc, study.seed);
  OptimizerState state;
  std::mt19937_64 rng = stream(study.seed, kEpisodes);
  std::mt19937_64 mix = stream(study.seed, kPooled);

  // Target D^tr windows join the pool as extra tasks.
  std::vector<WindowBatch> targets;
  for (const auto& ep : study.split.target) targets.push_back(study.prepare(ep).train);
  const double n_src = static_cast<double>(study.split.source.size());
  std::bernoulli_distribution from_target(targets.empty() ? 0.0
                                                          : targets.size() / (n_src + targets.size()));
  std::uniform_int_distribution<std::size_t> pick_target(0, targets.empty() ? 0 : targets.size() - 1);

  for (std::size_t step = 0; step < cfg.train_steps; ++step) {
    const auto batch = sample_batch(study, cfg, mc.meta_batch, rng);
    Tape tape;
    const ParamSet watched = params.watched(tape);
    const MpfnParams mp = MpfnParams::from(theta0_of(watched));
    Tensor loss;
    for (const auto& ep : batch) {
      Tensor l;
      if (from_target(mix)) {
        l = mpfn_loss(mp, targets[pick_target(mix)], MpfnMode::full, mc.reduction);
      } else {
        l = add(mpfn_loss(mp, ep.train, MpfnMode::full, mc.reduction),
                mpfn_loss(mp, ep.test, MpfnMode::full, mc.reduction));
      }
      loss = loss.empty() ? l : add(loss, l);
    }
    params = optimizer_step(mc.outer, params, tape.backward(loss), mc.beta, state);
  }
  return params;
}

ParamSet train_method(const Study& study, const ExperimentConfig& cfg, const Method& method) {
  if (!method.trained()) return {};
  if (method.kind == Method::Kind::baseline && method.baseline == Baseline::finetune) {
    return train_pooled(study, cfg);
  }
  return train_meta(study, cfg, method);
}

std::vector<SegmentResult> evaluate_method(const Study& study, const ExperimentConfig& cfg,
                                           const Method& method, const ParamSet& params) {
  std::vector<SegmentResult> out;
  const MetaConfig mc = method_config(cfg, method);
  for (const auto& ep : study.split.target) {
    SegmentResult r;
    r.seed = study.seed;
    r.method = method.name();
    r.segment_id = ep.segment_id;
    r.category = ep.category;
    for (const auto& w : ep.d_te) {
      r.t_c.push_back(w.t_c);
      r.actuals.push_back(w.target);
    }
    if (method.kind == Method::Kind::baseline && method.baseline == Baseline::stat) {
      const SegmentSeries& s = study.series(ep.segment_id);
      for (std::size_t t : r.t_c) r.predictions.push_back(stat_baseline(s.demand, t, study.horizon, s.start));
    } else if (method.kind == Method::Kind::baseline && method.baseline == Baseline::finetune) {
      const PreparedEpisode p = study.prepare(ep);
      const ParamSet theta = inner_adapt(theta0_of(params), p.train, mc.alpha, mc.inner_steps,
                                         MpfnMode::full, MetaGradient::first_order, mc.reduction);
      NoGradGuard guard;
      const Tensor pred = mpfn_forward(MpfnParams::from(theta), p.test, MpfnMode::full);
      for (std::size_t i = 0; i < pred.size(); ++i) r.predictions.push_back(p.scaler.inverse_target(pred[i]));
    } else {
      const AdaptResult a = meta_test_adapt(params, study.prepare(ep), mc);
      r.predictions = a.predictions;
      r.representation = a.representation;
    }
    r.mape = mape(r.predictions, r.actuals);
    out.push_back(std::move(r));
  }
  return out;
}

std::string checkpoint_name(std::uint64_t seed, const Method& method) {
  return "seed" + std::to_string(seed) + "-" + method.name() + ".ckpt";
}

std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg, std::uint64_t seed,
                                  const std::vector<SegmentResult>* reuse) {
  std::vector<SweepPoint> out;
  const Method full = Method::of(Ablation::full);
  for (std::size_t w : cfg.sweep) {
    std::vector<SegmentResult> rows;
    if (reuse && w == cfg.horizon.window) {
      rows = *reuse;
    } else {
      Study study(cfg, seed, w);
      rows = evaluate_method(study, cfg, full, train_meta(study, cfg, full));
    }
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (const auto& r : rows) {
      acc[r.category].first += r.mape;
      acc[r.category].second += 1;
      acc["all"].first += r.mape;
      acc["all"].second += 1;
    }
    for (const auto& [cat, v] : acc) out.push_back({seed, w, cat, v.first / static_cast<double>(v.second)});
  }
  return out;
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RunReport report;
  report.config = config_echo(cfg);
  report.seeds = cfg.seeds;
  const auto methods = cfg.methods();
  for (const auto& m : methods) report.methods.push_back(m.name());
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t seed : cfg.seeds) {
    auto t0 = std::chrono::steady_clock::now();
    const auto study = stage("data", seed, cfg, [&] {
      return std::make_unique<Study>(cfg, seed, cfg.horizon.window);
    });
    report.runtime_seconds["seed" + seed_text(seed) + "/data"] = seconds_since(t0);
    std::vector<SegmentResult> full_rows;
    for (const auto& m : methods) {
      t0 = std::chrono::steady_clock::now();
      const ParamSet params = stage("train", seed, cfg, [&] { return train_method(*study, cfg, m); });
      if (!cfg.out_dir.empty() && m.trained()) {
        std::filesystem::create_directories(cfg.out_dir / "checkpoints");
        save_checkpoint(cfg.out_dir / "checkpoints" / checkpoint_name(seed, m), params);
      }
      auto rows = stage("evaluate", seed, cfg, [&] { return evaluate_method(*study, cfg, m, params); });
      report.runtime_seconds["seed" + seed_text(seed) + "/" + m.name()] = seconds_since(t0);
      double sum = 0;
      for (const auto& r : rows) sum += r.mape;
      spdlog::info("seed {} {}: mean target MAPE {:.3f}% ({:.1f} s)", seed, m.name(),
                   sum / static_cast<double>(std::max<std::size_t>(1, rows.size())),
                   report.runtime_seconds["seed" + seed_text(seed) + "/" + m.name()]);
      if (m == Method::of(Ablation::full)) full_rows = rows;
      report.segments.insert(report.segments.end(), rows.begin(), rows.end());
    }
    if (!cfg.sweep.empty()) {
      t0 = std::chrono::steady_clock::now();
      auto points = stage("sweep", seed, cfg, [&] {
        return run_sweep(cfg, seed, full_rows.empty() ? nullptr : &full_rows);
      });
      report.sweep.insert(report.sweep.end(), points.begin(), points.end());
      report.runtime_seconds["seed" + seed_text(seed) + "/sweep"] = seconds_since(t0);
    }
  }
  report.runtime_seconds["total"] = seconds_since(start);
  if (!cfg.out_dir.empty()) {
    write_report(cfg.out_dir, report);
    write_timing(cfg.out_dir, report);
  }
  return report;
}

}  // namespace rmldp
