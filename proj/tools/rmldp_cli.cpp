#include <algorithm>
#include <filesystem>
#include <iostream>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "rmldp/checkpoint.hpp"
#include "rmldp/error.hpp"
#include "rmldp/harness.hpp"

namespace fs = std::filesystem;
using namespace rmldp;

namespace {

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string ablation;
  std::string baseline;
  std::string out = "out";
  bool verbose = false;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig cfg;
  if (!o.config.empty()) cfg = load_config(o.config);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seeds = {*o.seed};
  cfg.out_dir = o.out;
  cfg.validate();
  return cfg;
}

/// --ablation and --baseline select methods; without either, the config's list.
std::vector<Method> selected(const Options& o, const ExperimentConfig& cfg) {
  std::vector<Method> out;
  if (!o.ablation.empty()) out.push_back(Method::of(parse_ablation(o.ablation)));
  if (!o.baseline.empty()) out.push_back(Method::of(parse_baseline(o.baseline)));
  return out.empty() ? cfg.methods() : out;
}

fs::path results_path(const fs::path& out, std::uint64_t seed, const Method& m) {
  return out / "results" / ("seed" + std::to_string(seed) + "-" + m.name() + ".csv");
}

ParamSet load_trained(const ExperimentConfig& cfg, std::uint64_t seed, const Method& m) {
  const fs::path path = cfg.out_dir / "checkpoints" / checkpoint_name(seed, m);
  if (!fs::exists(path)) {
    throw IoError("missing checkpoint " + path.string() + " (run `train` for " + m.name() + " first)");
  }
  return load_checkpoint(path);
}

void evaluate_and_write(const ExperimentConfig& cfg, const Study& study, const Method& m,
                        const ParamSet& params) {
  const auto rows = evaluate_method(study, cfg, m, params);
  write_results(results_path(cfg.out_dir, study.seed, m), rows);
  write_predictions(cfg.out_dir / "predictions" / ("seed" + std::to_string(study.seed) + "-" + m.name() + ".csv"),
                    rows);
  double sum = 0;
  for (const auto& r : rows) sum += r.mape;
  std::cout << "seed " << study.seed << " " << m.name() << ": mean target MAPE "
            << sum / static_cast<double>(std::max<std::size_t>(rows.size(), 1)) << "%\n";
}

int cmd_gen(const Options& o) {
  const auto cfg = load(o);
  const std::uint64_t seed = cfg.seeds.front();
  const SyntheticWorld w = load_world(cfg, seed);
  fs::create_directories(cfg.out_dir);
  write_demand(cfg.out_dir / "demand.jsonl", w);
  write_orders(cfg.out_dir / "orders.jsonl", w.orders);
  std::cout << "wrote " << w.segments.size() << " segments and " << w.orders.size() << " orders to "
            << cfg.out_dir << "\n";
  return 0;
}

int cmd_graph(const Options& o) {
  const auto cfg = load(o);
  const std::uint64_t seed = cfg.seeds.front();
  const SyntheticWorld w = load_world(cfg, seed);
  const NodeEmbedding emb = embed_segments(w, cfg, seed);
  fs::create_directories(cfg.out_dir);
  write_embedding(cfg.out_dir / "embedding.jsonl", emb);
  std::cout << "embedded " << emb.size() << " segments; intra-inter cosine gap "
            << cosine_gap(emb, w.categories()) << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  const auto cfg = load(o);
  for (std::uint64_t seed : cfg.seeds) {
    Study study(cfg, seed, cfg.horizon.window);
    for (const auto& m : selected(o, cfg)) {
      if (!m.trained()) continue;
      const ParamSet p = train_method(study, cfg, m);
      fs::create_directories(cfg.out_dir / "checkpoints");
      save_checkpoint(cfg.out_dir / "checkpoints" / checkpoint_name(seed, m), p);
      std::cout << "trained " << m.name() << " for seed " << seed << "\n";
    }
  }
  return 0;
}

/// Meta-testing of trained meta-learners (RMLDP variants and MAML).
int cmd_adapt(const Options& o) {
  const auto cfg = load(o);
  for (std::uint64_t seed : cfg.seeds) {
    Study study(cfg, seed, cfg.horizon.window);
    for (const auto& m : selected(o, cfg)) {
      const bool meta = m.kind == Method::Kind::rmldp || m.baseline == Baseline::maml;
      if (!meta) continue;
      evaluate_and_write(cfg, study, m, load_trained(cfg, seed, m));
    }
  }
  return 0;
}

/// Baselines and their metrics; finetune and maml need a checkpoint from `train`.
int cmd_eval(const Options& o) {
  const auto cfg = load(o);
  std::vector<Method> methods;
  if (!o.baseline.empty()) {
    methods.push_back(Method::of(parse_baseline(o.baseline)));
  } else {
    for (Baseline b : cfg.baselines) methods.push_back(Method::of(b));
  }
  for (std::uint64_t seed : cfg.seeds) {
    Study study(cfg, seed, cfg.horizon.window);
    for (const auto& m : methods) {
      evaluate_and_write(cfg, study, m, m.trained() ? load_trained(cfg, seed, m) : ParamSet{});
    }
  }
  return 0;
}

int cmd_sweep(const Options& o) {
  auto cfg = load(o);
  if (cfg.sweep.empty()) cfg.sweep = {15, 20, 25, 30, 35, 40};
  std::vector<SweepPoint> points;
  for (std::uint64_t seed : cfg.seeds) {
    auto p = run_sweep(cfg, seed);
    points.insert(points.end(), p.begin(), p.end());
  }
  write_sweep(cfg.out_dir / "sweep.csv", points);
  for (const auto& p : points) {
    if (p.category == "all") std::cout << "seed " << p.seed << " window " << p.window << ": " << p.mape << "%\n";
  }
  return 0;
}

/// Merges results/*.csv and sweep.csv under --out into the report files.
int cmd_report(const Options& o) {
  const auto cfg = load(o);
  RunReport report;
  report.config = config_echo(cfg);
  std::vector<fs::path> files;
  if (fs::exists(cfg.out_dir / "results")) {
    for (const auto& e : fs::directory_iterator(cfg.out_dir / "results")) {
      if (e.path().extension() == ".csv") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no results under " + (cfg.out_dir / "results").string());
  for (const auto& f : files) {
    auto rows = read_results(f);
    report.segments.insert(report.segments.end(), rows.begin(), rows.end());
  }
  // Methods in config order first, then any others by name.
  std::set<std::string> present;
  std::set<std::uint64_t> seeds;
  for (const auto& r : report.segments) {
    present.insert(r.method);
    seeds.insert(r.seed);
  }
  for (const auto& m : cfg.methods()) {
    if (present.erase(m.name())) report.methods.push_back(m.name());
  }
  report.methods.insert(report.methods.end(), present.begin(), present.end());
  report.seeds.assign(seeds.begin(), seeds.end());
  if (fs::exists(cfg.out_dir / "sweep.csv")) report.sweep = read_sweep(cfg.out_dir / "sweep.csv");
  write_report(cfg.out_dir, report);
  std::cout << "wrote report to " << cfg.out_dir << "\n";
  return 0;
}

int cmd_run(const Options& o) {
  const auto cfg = load(o);
  const RunReport r = run_experiment(cfg);
  for (const auto& m : method_summary(r)) std::cout << m.method << ": " << m.mean << "%\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relation-aware meta-learning for demand prediction on data-poor segments"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "flat key=value config file");
    sub->add_option("--set", o.overrides, "extra key=value settings applied after --config");
    sub->add_option("--seed", o.seed, "run this seed only");
    sub->add_option("--ablation", o.ablation, "full|no_d|no_g|szn|local");
    sub->add_option("--baseline", o.baseline, "stat|finetune|maml");
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    sub->add_flag("-v,--verbose", o.verbose, "log training progress");
  };
  std::vector<std::pair<CLI::App*, int (*)(const Options&)>> commands{
      {app.add_subcommand("gen", "write a synthetic demand file and order log"), cmd_gen},
      {app.add_subcommand("graph", "co-occurrence graph and DeepWalk embeddings"), cmd_graph},
      {app.add_subcommand("train", "meta-train (or pool-train for finetune) and save checkpoints"), cmd_train},
      {app.add_subcommand("adapt", "meta-test trained meta-learners on target segments"), cmd_adapt},
      {app.add_subcommand("eval", "run baselines and write their metrics"), cmd_eval},
      {app.add_subcommand("sweep", "sequence-length study of full RMLDP"), cmd_sweep},
      {app.add_subcommand("report", "merge results into CSV and Markdown reports"), cmd_report},
      {app.add_subcommand("run", "the whole experiment in one go"), cmd_run},
  };
  for (auto& [sub, fn] : commands) common(sub);
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::info);
  try {
    for (auto& [sub, fn] : commands) {
      if (sub->parsed()) return fn(o);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
