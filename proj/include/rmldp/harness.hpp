#pragma once

// Experiment driver: data, graph embeddings, meta-training, meta-testing,
// baselines, MAPE reports and significance tests.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rmldp/meta_learner.hpp"
#include "rmldp/relation.hpp"
#include "rmldp/synthdata.hpp"

namespace rmldp {

/// Mean of |y - y_hat| / max(|y|, 1e-8) in percent.
double mape(std::span<const double> preds, std::span<const double> actuals);

/// Mean of the last-season estimate (sum over [t_c+T_g-S, t_c+T_g+T_f-S]) and
/// the recent estimate (sum over the T_f + 1 days ending at t_c), using
/// whichever are recorded from day `first` on and lie in the past.
double stat_baseline(std::span<const double> series, std::size_t t_c, const HorizonConfig& cfg,
                     std::size_t first = 0);

struct TTestResult {
  std::size_t n = 0;
  double mean_diff = 0.0;
  double t = 0.0;
  double p = 1.0;
};

/// Paired two-sided Student t-test on a[i] - b[i].
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);
double significance_test(std::span<const double> a, std::span<const double> b);

enum class Baseline { stat, finetune, maml };
Baseline parse_baseline(const std::string& text);
const char* to_string(Baseline b);

/// A report row label: an RMLDP variant or a baseline.
struct Method {
  enum class Kind { rmldp, baseline } kind = Kind::rmldp;
  Ablation ablation = Ablation::full;
  Baseline baseline = Baseline::stat;

  static Method of(Ablation a) { return {Kind::rmldp, a, Baseline::stat}; }
  static Method of(Baseline b) { return {Kind::baseline, Ablation::full, b}; }
  /// "rmldp", "rmldp-d", "rmldp-g", "rmldp-szn", "rmldp-local", or the baseline name.
  std::string name() const;
  bool trained() const { return kind == Kind::rmldp || baseline != Baseline::stat; }
  bool operator==(const Method&) const = default;
};

Method parse_method(const std::string& name);

struct ExperimentConfig {
  GeneratorConfig gen;         // used when no data files are given
  std::string demand_path;     // ingest these instead of generating
  std::string orders_path;
  HorizonConfig horizon;
  MetaConfig meta;
  ModelDims dims;
  DeepWalkConfig walk;         // walk.dim follows dims.d_walk
  double graph_percentile = 0.5;
  double split = 0.7;
  EpisodeLayout layout;
  std::size_t train_steps = 1000;
  std::vector<Ablation> ablations{Ablation::full};
  std::vector<Baseline> baselines{Baseline::stat, Baseline::finetune, Baseline::maml};
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::size_t> sweep;  // |T_c| values, empty to skip
  std::filesystem::path out_dir;   // empty to skip writing

  void validate() const;
  std::vector<Method> methods() const;
};

/// Flat `dotted.key = value` lines; '#' starts a comment. Unknown or repeated
/// keys are errors.
ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
/// Every key with its current value, sorted by key; parse_config reads it back.
std::string config_echo(const ExperimentConfig& cfg);

/// One seed's data: world, source/target split and graph embedding.
/// Episodes point into `world`, so a Study is neither copied nor moved.
struct Study {
  Study(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t window);
  Study(const Study&) = delete;
  Study& operator=(const Study&) = delete;

  std::uint64_t seed;
  HorizonConfig horizon;
  SyntheticWorld world;
  EpisodeSplit split;
  NodeEmbedding embedding;
  std::vector<double> fallback_graph;  // mean embedding, for unseen segments

  const SegmentSeries& series(const std::string& id) const;
  PreparedEpisode prepare(const Episode& ep) const;
};

SyntheticWorld load_world(const ExperimentConfig& cfg, std::uint64_t seed);
NodeEmbedding embed_segments(const SyntheticWorld& world, const ExperimentConfig& cfg,
                             std::uint64_t seed);

/// Meta-training of an RMLDP variant or the MAML baseline.
ParamSet train_meta(const Study& study, const ExperimentConfig& cfg, const Method& method);
/// One MPFN under theta0/mpfn/ trained on pooled source episodes and target D^tr.
ParamSet train_pooled(const Study& study, const ExperimentConfig& cfg);
/// train_meta or train_pooled, as the method needs.
ParamSet train_method(const Study& study, const ExperimentConfig& cfg, const Method& method);
MetaConfig method_config(const ExperimentConfig& cfg, const Method& method);

struct SegmentResult {
  std::uint64_t seed = 0;
  std::string method;
  std::string segment_id;
  std::string category;
  double mape = 0.0;
  std::vector<std::size_t> t_c;
  std::vector<double> predictions;
  std::vector<double> actuals;
  std::vector<double> representation;
};

/// Predictions on every target's D^te. `params` is ignored by stat.
std::vector<SegmentResult> evaluate_method(const Study& study, const ExperimentConfig& cfg,
                                           const Method& method, const ParamSet& params);

struct SweepPoint {
  std::uint64_t seed = 0;
  std::size_t window = 0;
  std::string category;  // "all" for the mean over every target segment
  double mape = 0.0;
};

struct RunReport {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> methods;
  std::vector<SegmentResult> segments;
  std::vector<SweepPoint> sweep;
  std::map<std::string, double> runtime_seconds;  // kept out of the report files
};

struct CategoryRow {
  std::uint64_t seed;
  std::string method;
  std::string category;
  std::size_t segments;
  double mean_mape;
};
std::vector<CategoryRow> category_means(const RunReport& report);

struct MethodRow {
  std::string method;
  std::vector<double> seed_means;  // in report.seeds order
  double mean = 0.0;               // mean of seed_means
};
std::vector<MethodRow> method_summary(const RunReport& report);

struct SignificanceRow {
  std::string method_a;
  std::string method_b;
  TTestResult test;
};
/// The first method against every other, paired by (seed, segment).
std::vector<SignificanceRow> significance_table(const RunReport& report);

/// Mean MAPE of a method over the given seed (all seeds when seed is empty).
double mean_mape(const RunReport& report, const std::string& method,
                 std::optional<std::uint64_t> seed = {});

RunReport run_experiment(const ExperimentConfig& cfg);

/// CSV tables, a Markdown summary and the config echo; runtime goes to
/// timing.txt alone so the rest is reproducible byte for byte.
void write_report(const std::filesystem::path& dir, const RunReport& report);
void write_timing(const std::filesystem::path& dir, const RunReport& report);
/// Per-segment results of one method and seed, read back by merge_results.
void write_results(const std::filesystem::path& path, const std::vector<SegmentResult>& rows);
std::vector<SegmentResult> read_results(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path, const std::vector<SegmentResult>& rows);
void write_sweep(const std::filesystem::path& path, const std::vector<SweepPoint>& rows);
std::vector<SweepPoint> read_sweep(const std::filesystem::path& path);

/// Per-category and overall target MAPE of full RMLDP for each |T_c|.
std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg, std::uint64_t seed,
                                  const std::vector<SegmentResult>* reuse = nullptr);

std::string checkpoint_name(std::uint64_t seed, const Method& method);

}  // namespace rmldp
