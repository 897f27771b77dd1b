#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "rmldp/grad_check.hpp"
#include "rmldp/mpfn.hpp"
#include "rmldp/ops.hpp"

using namespace rmldp;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(r * c);
  for (auto& x : v) x = dist(rng);
  return Tensor({r, c}, std::move(v));
}

SampleWindow random_window(std::size_t steps, std::size_t e, std::mt19937_64& rng,
                           bool mask = true) {
  SampleWindow w;
  w.local_seq = random_matrix(steps, e, rng);
  w.seasonal_seq = mask ? random_matrix(steps, e, rng) : Tensor::zeros({steps, e});
  w.seasonal_mask = mask;
  w.target = std::normal_distribution<double>(0.0, 1.0)(rng);
  return w;
}

ParamSet zero_like(const ParamSet& p) {
  ParamSet z;
  for (const auto& [name, t] : p) z.set(name, Tensor::zeros(t.shape()));
  return z;
}

ParamSet tiny_params(std::mt19937_64& rng) {
  return init_mpfn({.input = 3, .hidden = 4, .output = 1}, rng);
}

}  // namespace

TEST(TargetDemand, ConstantOnesCountsInclusiveTerms) {
  std::vector<double> ones(200, 1.0);
  HorizonConfig cfg{.gap = 14, .horizon = 30};
  EXPECT_EQ(target_demand(ones, 0, cfg), 31.0);
  EXPECT_EQ(target_demand(std::vector<double>(200, 0.0), 5, cfg), 0.0);
}

TEST(TargetDemand, IndexSeriesMatchesDirectSummation) {
  std::vector<double> series(10);
  std::iota(series.begin(), series.end(), 0.0);
  HorizonConfig cfg{.gap = 2, .horizon = 3};
  const double oracle = std::accumulate(series.begin() + 2, series.begin() + 6, 0.0);
  EXPECT_EQ(oracle, 14.0);
  EXPECT_EQ(target_demand(series, 0, cfg), oracle);
}

TEST(TargetDemand, ShortSeriesIsAnError) {
  HorizonConfig cfg{.gap = 2, .horizon = 3};
  std::vector<double> series(5, 1.0);
  EXPECT_THROW(target_demand(series, 0, cfg), DataError);
  EXPECT_NO_THROW(target_demand(std::vector<double>(6, 1.0), 0, cfg));
}

TEST(GruStep, ZeroParamsHalveHiddenState) {
  std::mt19937_64 rng(1);
  auto cell = GruCellParams::from(zero_like(init_gru(3, 4, rng, "g/")), "g/");
  Tensor h({1, 4}, {0.8, -0.4, 0.25, 1.0});
  Tensor x({1, 3}, {5.0, -2.0, 0.1});
  Tensor out = gru_step(cell, x, h);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(out[i], 0.5 * h[i]);
  Tensor zero = gru_step(cell, x, Tensor::zeros({1, 4}));
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
}

TEST(GruStep, OutputStaysInsideUnitBox) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    ParamSet p;
    for (const char* g : {"z", "r", "h"}) {
      p.set(std::string("w_") + g, random_matrix(5, 3, rng));
      p.set(std::string("u_") + g, random_matrix(5, 5, rng));
      p.set(std::string("b_") + g, random_matrix(1, 5, rng));
    }
    auto cell = GruCellParams::from(p, "");
    std::vector<double> hv(5);
    for (auto& v : hv) v = unit(rng);
    Tensor out = gru_step(cell, random_matrix(1, 3, rng, 2.0), Tensor({1, 5}, hv));
    for (double v : out.values()) {
      EXPECT_GT(v, -1.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(GruStep, ShapeMismatchIsAnError) {
  std::mt19937_64 rng(3);
  auto cell = GruCellParams::from(init_gru(3, 4, rng, ""), "");
  EXPECT_THROW(gru_step(cell, Tensor::zeros({1, 2}), Tensor::zeros({1, 4})), ShapeError);
  EXPECT_THROW(gru_step(cell, Tensor::zeros({1, 3}), Tensor::zeros({1, 5})), ShapeError);
  EXPECT_THROW(gru_step(cell, Tensor::zeros({2, 3}), Tensor::zeros({1, 4})), ShapeError);
}

TEST(GruRun, HiddenStaysInsideUnitBoxOverLongSequences) {
  std::mt19937_64 rng(4);
  auto cell = GruCellParams::from(init_gru(3, 6, rng, ""), "");
  std::vector<Tensor> frames;
  for (int t = 0; t < 200; ++t) frames.push_back(random_matrix(4, 3, rng, 5.0));
  Tensor h = gru_run(cell, frames);
  for (double v : h.values()) {
    EXPECT_GT(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Mpfn, ZeroParamsPredictZero) {
  std::mt19937_64 rng(5);
  auto params = MpfnParams::from(zero_like(tiny_params(rng)));
  EXPECT_EQ(mpfn_forward(params, random_window(5, 3, rng), MpfnMode::full), 0.0);
}

TEST(Mpfn, LocalOnlyMatchesFullWithSilentSeasonalBranch) {
  std::mt19937_64 rng(6);
  ParamSet p = tiny_params(rng);
  for (const auto& [name, t] : p.with_prefix("mpfn/seasonal/")) p.set(name, Tensor::zeros(t.shape()));
  p.set("mpfn/head/b", Tensor::scalar(0.3));
  auto params = MpfnParams::from(p);

  SampleWindow w = random_window(5, 3, rng);
  w.seasonal_seq = Tensor::zeros({5, 3});
  // Oracle: full forward with the seasonal hidden state forced to zero.
  WindowBatch batch = make_batch(std::span(&w, 1));
  Tensor h_local = gru_run(params.local, batch.local);
  Tensor fused = concat({Tensor::zeros({1, 4}), h_local}, 1);
  const double oracle =
      add_bias(matmul(fused, params.head_weight, false, true), params.head_bias).item();

  EXPECT_EQ(mpfn_forward(params, w, MpfnMode::full), oracle);
  EXPECT_EQ(mpfn_forward(params, w, MpfnMode::local_only), oracle);
}

TEST(Mpfn, SeasonalOnlyMatchesFullWithSilentLocalBranch) {
  std::mt19937_64 rng(7);
  ParamSet p = tiny_params(rng);
  for (const auto& [name, t] : p.with_prefix("mpfn/local/")) p.set(name, Tensor::zeros(t.shape()));
  auto params = MpfnParams::from(p);
  SampleWindow w = random_window(5, 3, rng);
  w.local_seq = Tensor::zeros({5, 3});
  EXPECT_EQ(mpfn_forward(params, w, MpfnMode::full),
            mpfn_forward(params, w, MpfnMode::seasonal_only));
}

TEST(Mpfn, FalseMaskSilencesSeasonalBranchInEveryMode) {
  std::mt19937_64 rng(8);
  auto params = MpfnParams::from(tiny_params(rng));
  SampleWindow w = random_window(5, 3, rng);
  SampleWindow masked = w;
  masked.seasonal_mask = false;
  EXPECT_EQ(mpfn_forward(params, masked, MpfnMode::full),
            mpfn_forward(params, w, MpfnMode::local_only));
  // Mixed batches zero only the masked rows.
  std::vector<SampleWindow> both{w, masked};
  NoGradGuard guard;
  Tensor out = mpfn_forward(params, make_batch(both), MpfnMode::full);
  EXPECT_EQ(out[0], mpfn_forward(params, w, MpfnMode::full));
  EXPECT_EQ(out[1], mpfn_forward(params, masked, MpfnMode::full));
}

TEST(Mpfn, TableSizeRunsAndIsFinite) {
  std::mt19937_64 rng(9);
  auto params = MpfnParams::from(init_mpfn({.input = 48, .hidden = 128, .output = 1}, rng));
  const double y = mpfn_forward(params, random_window(30, 48, rng), MpfnMode::full);
  EXPECT_TRUE(std::isfinite(y));
}

TEST(Mpfn, ForwardIsDeterministic) {
  std::mt19937_64 rng(10);
  auto params = MpfnParams::from(tiny_params(rng));
  SampleWindow w = random_window(5, 3, rng);
  const double a = mpfn_forward(params, w, MpfnMode::full);
  const double b = mpfn_forward(params, w, MpfnMode::full);
  EXPECT_EQ(std::bit_cast<std::uint64_t>(a), std::bit_cast<std::uint64_t>(b));
}

TEST(Mpfn, InitIsSeededAndBounded) {
  std::mt19937_64 a(11), b(11);
  ParamSet pa = init_mpfn({.input = 3, .hidden = 4, .output = 1}, a);
  ParamSet pb = init_mpfn({.input = 3, .hidden = 4, .output = 1}, b);
  EXPECT_TRUE(pa == pb);
  EXPECT_EQ(pa.size(), 20u);
  for (double v : pa.at("mpfn/local/w_z").values()) EXPECT_LE(std::abs(v), 1.0 / std::sqrt(3.0));
  for (double v : pa.at("mpfn/head/w").values()) EXPECT_LE(std::abs(v), 1.0 / std::sqrt(8.0));
  for (double v : pa.at("mpfn/seasonal/b_r").values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(pa.at("mpfn/head/w").shape(), (Shape{1, 8}));
}

TEST(Mpfn, HeadShapeIsValidated) {
  std::mt19937_64 rng(12);
  ParamSet p = tiny_params(rng);
  p.set("mpfn/head/w", Tensor::zeros({1, 4}));
  EXPECT_THROW(MpfnParams::from(p), ShapeError);
}

TEST(MpfnLoss, TrivialValues) {
  std::mt19937_64 rng(13);
  auto params = MpfnParams::from(zero_like(tiny_params(rng)));
  auto batch_with_targets = [&](std::vector<double> targets) {
    std::vector<SampleWindow> ws;
    for (double t : targets) {
      ws.push_back(random_window(5, 3, rng));
      ws.back().target = t;
    }
    return make_batch(ws);
  };
  EXPECT_EQ(mpfn_loss(params, batch_with_targets({0.0, 0.0}), MpfnMode::full).item(), 0.0);
  EXPECT_NEAR(mpfn_loss(params, batch_with_targets({0.7, 0.7, 0.7}), MpfnMode::full).item(),
              0.49, 1e-12);
  EXPECT_EQ(mpfn_loss(params, batch_with_targets({1.0, 3.0}), MpfnMode::full).item(), 5.0);
  EXPECT_EQ(mpfn_loss(params, batch_with_targets({1.0, 3.0}), MpfnMode::full, LossReduction::sum)
                .item(),
            10.0);
  EXPECT_THROW(make_batch(std::vector<SampleWindow>{}), DataError);
}

TEST(MpfnLoss, NonNegative) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    auto params = MpfnParams::from(tiny_params(rng));
    std::vector<SampleWindow> ws{random_window(5, 3, rng), random_window(5, 3, rng, false)};
    EXPECT_GE(mpfn_loss(params, make_batch(ws), MpfnMode::full).item(), 0.0);
  }
}

TEST(MpfnLoss, GradCheckAtTinyConfig) {
  std::mt19937_64 rng(15);
  ParamSet params = tiny_params(rng);
  std::vector<SampleWindow> ws;
  for (int i = 0; i < 4; ++i) ws.push_back(random_window(5, 3, rng, i != 2));
  WindowBatch batch = make_batch(ws);
  for (auto mode : {MpfnMode::full, MpfnMode::local_only, MpfnMode::seasonal_only}) {
    auto fn = [&](const ParamSet& p) { return mpfn_loss(MpfnParams::from(p), batch, mode); };
    auto result = grad_check(fn, params);
    EXPECT_LT(result.max_relative_error, 1e-4) << to_string(mode) << " " << result.worst_name;
  }
}

TEST(SegmentScaler, StandardizesTrainingFramesAndInvertsTargets) {
  std::mt19937_64 rng(16);
  std::vector<SampleWindow> train;
  for (int i = 0; i < 6; ++i) {
    SampleWindow w = random_window(5, 3, rng);
    std::vector<double> v(w.local_seq.values().begin(), w.local_seq.values().end());
    for (std::size_t k = 0; k < v.size(); k += 3) v[k] = 100.0 + 20.0 * i + static_cast<double>(k);
    w.local_seq = Tensor({5, 3}, v);
    w.target = 3100.0 + 50.0 * i;
    train.push_back(w);
  }
  train[4].seasonal_mask = false;
  auto scaler = SegmentScaler::fit(train, 30, ScalerFloors{0.0, 0.0});
  auto scaled = scaler.transform(std::span<const SampleWindow>(train));
  std::vector<double> sum(3, 0.0), sq(3, 0.0);
  std::size_t n = 0;
  auto add = [&](const Tensor& seq) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      sum[i % 3] += seq[i];
      sq[i % 3] += seq[i] * seq[i];
    }
    n += seq.rows();
  };
  for (const auto& w : scaled) {
    add(w.local_seq);
    if (w.seasonal_mask) add(w.seasonal_seq);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(sum[k] / n, 0.0, 1e-12);
    EXPECT_NEAR(sq[k] / n, 1.0, 1e-9);
  }
  for (const auto& w : train) {
    EXPECT_NEAR(scaler.inverse_target(scaler.transform_target(w.target)), w.target, 1e-9);
  }
  EXPECT_EQ(scaler.inverse_target(-1e6), 0.0);
  SampleWindow masked = random_window(5, 3, rng, false);
  const Tensor scaled_seasonal = scaler.transform(masked).seasonal_seq;
  for (double v : scaled_seasonal.values()) EXPECT_EQ(v, 0.0);
}

TEST(SegmentScaler, FloorsNearConstantChannels) {
  std::mt19937_64 rng(17);
  std::vector<SampleWindow> train;
  for (int i = 0; i < 4; ++i) {
    SampleWindow w = random_window(5, 3, rng, false);
    std::vector<double> v(w.local_seq.values().begin(), w.local_seq.values().end());
    for (std::size_t k = 0; k < v.size(); k += 3) {
      v[k] = 100.0 + 0.01 * static_cast<double>(k);
      v[k + 1] = 10.0 + 1e-3 * static_cast<double>(i);
    }
    w.local_seq = Tensor({5, 3}, v);
    train.push_back(w);
  }
  const ScalerFloors floors{0.25, 0.5};
  auto scaler = SegmentScaler::fit(train, 30, floors);
  SampleWindow probe = train.front();
  std::vector<double> v(probe.local_seq.values().begin(), probe.local_seq.values().end());
  double log_mean = 0.0, ext_mean = 0.0;
  for (const auto& w : train) {
    for (std::size_t r = 0; r < 5; ++r) {
      log_mean += std::log1p(w.local_seq[r * 3]) / 20.0;
      ext_mean += w.local_seq[r * 3 + 1] / 20.0;
    }
  }
  const Tensor z = scaler.transform(probe).local_seq;
  EXPECT_NEAR(z[0], (std::log1p(v[0]) - log_mean) / 0.25, 1e-9);
  EXPECT_NEAR(z[1], (v[1] - ext_mean) / (0.5 * ext_mean), 1e-9);
}
