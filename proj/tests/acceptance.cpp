// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include "rmldp/harness.hpp"

using namespace rmldp;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

void report(int id, const char* title, const Outcome& o) {
  std::printf("[%s] criterion %d, %s: %s\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str());
  std::fflush(stdout);
}

/// Runs a gtest binary with a filter; true when every selected test passed.
bool run_gtest(const std::string& binary, const std::string& filter, int& selected) {
  const fs::path log = fs::temp_directory_path() / "rmldp_acceptance_gtest.log";
  const std::string cmd = "\"" + binary + "\" --gtest_brief=1 --gtest_filter='" + filter + "' > \"" +
                          log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::string line;
  while (std::getline(in, line)) {
    int n = 0;
    if (std::sscanf(line.c_str(), "[==========] %d test", &n) == 1) selected += n;
    if (line.rfind("[  FAILED  ]", 0) == 0) std::printf("    %s\n", line.c_str());
  }
  return status == 0;
}

struct Suite {
  const char* binary;
  const char* filter;
};

Outcome run_suites(std::initializer_list<Suite> suites) {
  bool ok = true;
  int selected = 0;
  for (const auto& s : suites) ok = run_gtest(s.binary, s.filter, selected) && ok;
  return {ok, fmt::format("{} tests", selected)};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  Outcome o = run_suites({
      {TENSOR_TEST, "GradCheck.*:Backward.*"},
      {MPFN_TEST, "MpfnLoss.GradCheckAtTinyConfig"},
      {RELATION_TEST, "ReconstructionLoss.GradCheck:EncodeSegment.GradCheckThroughSmoothHead"},
      {META_TEST, "JointLoss.*"},
  });
  const double s = seconds_since(t0);
  o.pass = o.pass && s < 120.0;
  o.detail += fmt::format(" in {:.1f} s (limit 120 s)", s);
  return o;
}

Outcome trivial_suite() {
  return run_suites({
      {TENSOR_TEST,
       "Ops.SigmoidOfZeroIsHalf:Ops.IdentityMatmulReturnsVector:Ops.FrobeniusOfOnes:"
       "Backward.SquareAtThree:Backward.UnreachableLeafGetsZero:Backward.MseGradientIsTwoCOverN:"
       "GradCheck.LinearFunctionIsExact:GradCheck.DoubledAnalyticGradientIsFlagged:"
       "Optimizer.SgdStep:Optimizer.ZeroGradientLeavesParamsUnchanged"},
      {MPFN_TEST,
       "TargetDemand.ConstantOnesCountsInclusiveTerms:GruStep.ZeroParamsHalveHiddenState:"
       "Mpfn.ZeroParamsPredictZero:MpfnLoss.TrivialValues"},
      {RELATION_TEST,
       "EncodeSegment.SingleSampleEqualsItsEncoding:EncodeSegment.DuplicationAndPermutationLeaveMeanUnchanged:"
       "ReconstructionLoss.PerfectDecoderGivesZero:ReconstructionLoss.ZeroDecoderReturnsSquaredNorm:"
       "ReconstructionLoss.DoublingInputsAndReconstructionsQuadruples:"
       "Cooccurrence.SingleSegmentOrdersHaveNoEdges:Cooccurrence.InvariantToOrderPermutationAndSymmetric:"
       "ThresholdFilter.*:DeepWalk.IsolatedNodeKeepsSeededInit:DeepWalk.SameSeedIsBitIdentical:GraphRepr.*"},
      {META_TEST,
       "FuseRepr.*:Modulate.ZeroWeightsHalveTheta:Modulate.SaturatedGateIsIdentity:"
       "Modulate.NeverIncreasesMagnitude:InnerAdapt.SurrogateQuadratic:"
       "InnerAdapt.MatchedTargetsLeaveThetaUnchanged:JointLoss.ZeroLambdaIsSummedTestLoss:MetaTestAdapt.*"},
      {SYNTH_TEST,
       "GenerateWorld.SameSeedIsBitIdentical:GenerateWorld.LongTailCountIsExact:"
       "MakeEpisodes.SplitCountsAndRanking:MakeEpisodes.ChronologyHoldsForEveryEpisode"},
      {HARNESS_TEST,
       "Mape.Examples:StatBaseline.ConstantSeries:StatBaseline.ShortHistoryUsesRecentEstimate:"
       "Baselines.*:SignificanceTest.IdenticalListsGivePOne:"
       "SignificanceTest.ConstantNonzeroDifferenceGivesPZero:"
       "RunExperiment.AblationListGivesFiveRowsPerCategory:RunExperiment.TinySmokeRunIsFastAndByteIdentical"},
  });
}

Outcome derived_suite() {
  return run_suites({
      {TENSOR_TEST, "Optimizer.AdamFirstStepMovesByLearningRate:GradCheck.EveryOpKindOverTwentySeeds"},
      {MPFN_TEST,
       "MpfnLoss.GradCheckAtTinyConfig:TargetDemand.IndexSeriesMatchesDirectSummation:"
       "GruStep.ZeroParamsHalveHiddenState:GruStep.OutputStaysInsideUnitBox:"
       "Mpfn.LocalOnlyMatchesFullWithSilentSeasonalBranch"},
      {RELATION_TEST, "Cooccurrence.HandCountedWeights:ThresholdFilter.NearestRankPercentile:DeepWalk.TwoCliquesSeparate"},
      {META_TEST,
       "InnerAdapt.SurrogateQuadratic:JointLoss.ZeroAlphaGateBiasGradientMatchesFiniteDifferences:"
       "MetaTrainStep.RepeatedStepsHalveJointLoss:MetaTestAdapt.DeterministicAndReproducesTrainingInnerLoop:"
       "MetaTrainStep.ForcedGateMatchesIdentityGateWithoutReconstruction"},
      {SYNTH_TEST, "GenerateWorld.NoiselessFlatSeriesPeakAtSeasonLag:MakeEpisodes.ConstantWorldTargets"},
      {HARNESS_TEST,
       "StatBaseline.DoublingYearOverYear:SignificanceTest.ReferenceValues:"
       "RunExperiment.TinySmokeRunIsFastAndByteIdentical"},
  });
}

ExperimentConfig desk_config() {
  ExperimentConfig cfg = load_config(DESK_CONFIG);
  cfg.validate();
  return cfg;
}

double seed_mean(const RunReport& r, const std::string& method, std::uint64_t seed) {
  return mean_mape(r, method, seed);
}

Outcome transfer(const RunReport& r) {
  const double rmldp = mean_mape(r, "rmldp"), maml = mean_mape(r, "maml"), ft = mean_mape(r, "finetune");
  double p = 1.0;
  for (const auto& row : significance_table(r)) {
    if (row.method_a == "rmldp" && row.method_b == "maml") p = row.test.p;
  }
  const double gain = 100.0 * (maml - rmldp) / maml;
  // Runtime of the methods this criterion needs, data preparation included.
  double seconds = 0.0;
  for (const auto& [key, s] : r.runtime_seconds) {
    const auto slash = key.find('/');
    if (slash == std::string::npos) continue;
    const std::string what = key.substr(slash + 1);
    if (what == "data" || what == "rmldp" || what == "maml" || what == "finetune" || what == "stat") seconds += s;
  }
  const bool pass = rmldp < maml && maml < ft && gain >= 3.0 && p < 0.05 && seconds < 900.0;
  return {pass, fmt::format("seed-mean MAPE rmldp {:.3f}% < maml {:.3f}% < finetune {:.3f}%; gain {:.1f}% "
                            "(need >= 3%); paired p = {:.3g} (need < 0.05); runtime {:.0f} s (limit 900 s)",
                            rmldp, maml, ft, gain, p, seconds)};
}

Outcome ablations(const RunReport& r) {
  int le_d = 0, le_g = 0, szn = 0, local = 0;
  std::string per_seed;
  for (std::uint64_t seed : r.seeds) {
    const double full = seed_mean(r, "rmldp", seed);
    const double d = seed_mean(r, "rmldp-d", seed), g = seed_mean(r, "rmldp-g", seed);
    const double s = seed_mean(r, "rmldp-szn", seed), l = seed_mean(r, "rmldp-local", seed);
    le_d += full <= d;
    le_g += full <= g;
    szn += s > full;
    local += l > full;
    per_seed += fmt::format("\n    seed {}: full {:.3f}  -d {:.3f}  -g {:.3f}  -szn {:.3f}  -local {:.3f}", seed,
                            full, d, g, s, l);
  }
  const int n = static_cast<int>(r.seeds.size());
  const bool pass = n == 5 && le_d >= 4 && le_g >= 4 && szn == 5 && local == 5;
  return {pass, fmt::format("full <= -d in {}/{}, full <= -g in {}/{} (need 4/5); -szn worse in {}/{}, "
                            "-local worse in {}/{} (need 5/5){}",
                            le_d, n, le_g, n, szn, n, local, n, per_seed)};
}

Outcome graph_recovery(const ExperimentConfig& cfg) {
  int ok = 0;
  std::string gaps;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SyntheticWorld w = load_world(cfg, seed);
    const double gap = cosine_gap(embed_segments(w, cfg, seed), w.categories());
    ok += gap >= 0.2;
    gaps += fmt::format("{}{:.3f}", seed == 1 ? "" : ", ", gap);
  }
  int selected = 0;
  const bool cliques =
      run_gtest(RELATION_TEST, "DeepWalk.TwoCliquesSeparate:DeepWalk.PlantedPartitionSeparatesInMostSeeds", selected);
  return {ok >= 4 && cliques,
          fmt::format("intra-inter cosine gap >= 0.2 in {}/5 seeds ({}); planted-partition tests {}", ok, gaps,
                      cliques ? "pass" : "fail")};
}

Outcome sweep(const RunReport& r, const fs::path& out) {
  std::map<std::size_t, std::pair<double, int>> acc;
  for (const auto& p : r.sweep) {
    if (p.category != "all") continue;
    acc[p.window].first += p.mape;
    acc[p.window].second += 1;
  }
  std::string series;
  for (const auto& [w, v] : acc) series += fmt::format(" {}:{:.3f}", w, v.first / v.second);
  if (!acc.count(15) || !acc.count(30)) return {false, "sweep lacks |T_c| = 15 or 30;" + series};
  const double m15 = acc[15].first / acc[15].second, m30 = acc[30].first / acc[30].second;
  const bool files = fs::exists(out / "sweep.csv") && fs::exists(out / "sweep_mean.csv");
  return {m30 <= m15 && files && acc.size() == 6,
          fmt::format("seed-mean MAPE at 30 = {:.3f}% vs 15 = {:.3f}%; series{}; plot data {}", m30, m15, series,
                      files ? "written" : "missing")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism(ExperimentConfig cfg, const fs::path& root) {
  cfg.seeds = {1};
  cfg.train_steps = 60;
  cfg.sweep = {};
  const fs::path a = root / "determinism_a", b = root / "determinism_b";
  fs::remove_all(a);
  fs::remove_all(b);
  cfg.out_dir = a;
  run_experiment(cfg);
  cfg.out_dir = b;
  run_experiment(cfg);
  std::size_t files = 0, checkpoints = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file() || e.path().filename() == "timing.txt") continue;
    ++files;
    checkpoints += e.path().extension() == ".ckpt";
    const fs::path other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
      ++differ;
      std::printf("    differs: %s\n", e.path().string().c_str());
    }
  }
  return {differ == 0 && checkpoints > 0 && fs::exists(a / "report.md"),
          fmt::format("{} files compared ({} checkpoints), {} differ", files, checkpoints, differ)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto want = [&](int id) { return wanted.empty() || wanted.count(id) > 0; };
  spdlog::set_level(spdlog::level::warn);

  const fs::path root = fs::current_path() / "acceptance_out";
  fs::create_directories(root);
  const ExperimentConfig desk = desk_config();
  bool all = true;
  auto record = [&](int id, const char* title, const Outcome& o) {
    report(id, title, o);
    all = all && o.pass;
  };

  if (want(1)) record(1, "gradient oracle suite", gradient_suite());
  if (want(2)) record(2, "trivial-value suite", trivial_suite());
  if (want(3)) record(3, "derived-oracle suite", derived_suite());

  if (want(4) || want(5) || want(7)) {
    ExperimentConfig cfg = desk;
    cfg.out_dir = root / "desk";
    const auto t0 = Clock::now();
    const RunReport r = run_experiment(cfg);
    std::printf("    desk run: %zu seeds, %zu methods, %.0f s; report in %s\n", r.seeds.size(), r.methods.size(),
                seconds_since(t0), cfg.out_dir.string().c_str());
    if (want(4)) record(4, "synthetic transfer replication", transfer(r));
    if (want(5)) record(5, "ablation direction", ablations(r));
    if (want(7)) record(7, "sequence-length sweep", sweep(r, cfg.out_dir));
  }
  if (want(6)) record(6, "graph recovery", graph_recovery(desk));
  if (want(8)) record(8, "determinism", determinism(desk, root));
  return all ? 0 : 1;
}
