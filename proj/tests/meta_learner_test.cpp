#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "rmldp/checkpoint.hpp"
#include "rmldp/grad_check.hpp"
#include "rmldp/meta_learner.hpp"
#include "rmldp/ops.hpp"

using namespace rmldp;

namespace {

constexpr ModelDims kTiny{.features = 3, .hidden = 4, .d_q = 4, .d_g = 2, .d_walk = 4};

/// Raw windows whose target grows with the mean of the demand channel.
Episode random_episode(const std::string& id, std::mt19937_64& rng, std::size_t n_tr = 4,
                       std::size_t n_te = 3) {
  std::uniform_real_distribution<double> demand(5.0, 50.0);
  std::normal_distribution<double> feature(0.0, 1.0);
  auto window = [&](std::size_t t_c) {
    std::vector<double> l, s;
    double total = 0.0;
    for (std::size_t t = 0; t < 5; ++t) {
      const double d = demand(rng);
      total += d;
      l.insert(l.end(), {d, feature(rng), feature(rng)});
      s.insert(s.end(), {demand(rng), feature(rng), feature(rng)});
    }
    return SampleWindow{Tensor({5, 3}, l), Tensor({5, 3}, s), true, 31.0 * total / 5.0, t_c};
  };
  Episode ep;
  ep.segment_id = id;
  ep.category = "c";
  for (std::size_t i = 0; i < n_tr; ++i) ep.d_tr.push_back(window(i));
  for (std::size_t i = 0; i < n_te; ++i) ep.d_te.push_back(window(100 + i));
  std::vector<double> g(4);
  for (auto& x : g) x = feature(rng);
  ep.graph_vector = g;
  return ep;
}

std::vector<PreparedEpisode> tiny_batch(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PreparedEpisode> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(prepare_episode(random_episode("s" + std::to_string(i), rng), 30));
  }
  return out;
}

/// Windows from a smooth seasonal-looking signal with a segment-specific phase.
Episode smooth_episode(const std::string& id, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> phase(0.0, 6.283);
  std::normal_distribution<double> noise(0.0, 0.02);
  const double p = phase(rng), level = 20.0 + 10.0 * std::sin(p);
  auto series = [&](double t) { return level * (1.0 + 0.5 * std::sin(0.2 * t + p)); };
  auto window = [&](std::size_t t_c) {
    std::vector<double> l, s;
    for (std::size_t t = 0; t < 5; ++t) {
      const double now = static_cast<double>(t_c + t), past = now - 60.0;
      l.insert(l.end(), {series(now), std::sin(0.2 * now + p) + noise(rng), std::cos(0.2 * now + p)});
      s.insert(s.end(), {series(past), std::sin(0.2 * past + p) + noise(rng), std::cos(0.2 * past + p)});
    }
    double y = 0.0;
    for (int j = 8; j <= 12; ++j) y += series(static_cast<double>(t_c + 4 + j));
    return SampleWindow{Tensor({5, 3}, l), Tensor({5, 3}, s), true, y, t_c};
  };
  Episode ep;
  ep.segment_id = id;
  for (std::size_t i = 0; i < 6; ++i) ep.d_tr.push_back(window(3 * i));
  for (std::size_t i = 0; i < 4; ++i) ep.d_te.push_back(window(40 + 3 * i));
  ep.graph_vector = std::vector<double>{std::sin(p), std::cos(p), 0.5, -0.5};
  return ep;
}

MetaConfig tiny_config() {
  MetaConfig cfg;
  cfg.alpha = 0.1;
  cfg.beta = 1e-2;
  cfg.lambda = 0.5;
  cfg.inner_steps = 1;
  return cfg;
}

}  // namespace

TEST(FuseRepr, TableDimsAndLayout) {
  Tensor qd = Tensor::row(std::vector<double>(32, 0.0));
  Tensor qg = Tensor::row(std::vector<double>(16, 0.0));
  Tensor q = fuse_repr(qd, qg);
  ASSERT_EQ(q.shape(), (Shape{1, 48}));
  for (double v : q.values()) EXPECT_EQ(v, 0.0);
  std::vector<double> a(32), b(16);
  for (int i = 0; i < 32; ++i) a[i] = i + 1;
  for (int i = 0; i < 16; ++i) b[i] = -i - 1;
  Tensor q2 = fuse_repr(Tensor::row(a), Tensor::row(b));
  for (int j = 0; j < 32; ++j) EXPECT_EQ(q2[j], a[j]);
  for (int j = 0; j < 16; ++j) EXPECT_EQ(q2[32 + j], b[j]);
  EXPECT_THROW(fuse_repr(Tensor::zeros({2, 3}), qg), ShapeError);
}

TEST(Modulate, ZeroWeightsHalveTheta) {
  std::mt19937_64 rng(1);
  ParamSet theta0 = init_mpfn({3, 4, 1}, rng);
  ParamSet mod = init_modulation(theta0, 6, ModulationLayout::elementwise, rng);
  EXPECT_EQ(mod.at("mod/w").shape(), (Shape{theta0.total_dim(), 6}));
  mod.set("mod/w", Tensor::zeros(mod.at("mod/w").shape()));
  ParamSet out = modulate(mod, Tensor::row({1, 2, 3, 4, 5, 6}), theta0);
  for (const auto& [name, t] : theta0) {
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(out.at(name)[i], 0.5 * t[i]);
  }
}

TEST(Modulate, SaturatedGateIsIdentity) {
  std::mt19937_64 rng(2);
  ParamSet theta0 = init_mpfn({3, 4, 1}, rng);
  ParamSet mod;
  mod.set("mod/w", Tensor::zeros({theta0.total_dim(), 6}));
  mod.set("mod/b", Tensor::filled({1, theta0.total_dim()}, 100.0));
  ParamSet out = modulate(mod, Tensor::row({1, -2, 3, 0, 5, 6}), theta0);
  const auto a = theta0.flatten(), b = out.flatten();
  double inf = 0, diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inf = std::max(inf, std::abs(a[i]));
    diff = std::max(diff, std::abs(a[i] - b[i]));
  }
  EXPECT_LE(diff, 1e-10 * std::max(1.0, inf));
}

TEST(Modulate, NeverIncreasesMagnitude) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> dist(0.0, 3.0);
  for (auto layout : {ModulationLayout::elementwise, ModulationLayout::per_tensor}) {
    for (int trial = 0; trial < 10; ++trial) {
      ParamSet theta0 = init_mpfn({3, 4, 1}, rng);
      ParamSet mod = init_modulation(theta0, 6, layout, rng);
      std::vector<double> q(6);
      for (auto& x : q) x = dist(rng);
      const auto a = theta0.flatten(), b = modulate(mod, Tensor::row(q), theta0, layout).flatten();
      for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LE(std::abs(b[i]), std::abs(a[i]));
    }
  }
}

TEST(Modulate, PerTensorLayoutSharesOneGatePerTensor) {
  std::mt19937_64 rng(4);
  ParamSet theta0 = init_mpfn({3, 4, 1}, rng);
  ParamSet mod = init_modulation(theta0, 2, ModulationLayout::per_tensor, rng);
  EXPECT_EQ(mod.at("mod/b").shape(), (Shape{1, theta0.size()}));
  ParamSet out = modulate(mod, Tensor::row({0.5, -1.0}), theta0, ModulationLayout::per_tensor);
  for (const auto& [name, t] : theta0) {
    double ratio = std::nan("");
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] == 0.0) continue;
      const double r = out.at(name)[i] / t[i];
      if (std::isnan(ratio)) ratio = r;
      EXPECT_NEAR(r, ratio, 1e-12) << name;
    }
  }
  EXPECT_THROW(modulate(mod, Tensor::row({1.0}), theta0, ModulationLayout::per_tensor), ShapeError);
}

TEST(InnerAdapt, SurrogateQuadratic) {
  ParamSet theta;
  theta.set("theta", Tensor::scalar(0.0));
  auto loss = [](const ParamSet& p) {
    Tensor d = add_scalar(p.at("theta"), -2.0);
    return multiply(d, d);
  };
  EXPECT_EQ(inner_adapt(theta, loss, 0.25, 1).at("theta").item(), 1.0);
  // Oracle: iterate theta <- theta - 0.25 * 2 (theta - 2) by hand.
  double oracle = 0.0;
  for (int k = 0; k < 2; ++k) oracle -= 0.25 * 2.0 * (oracle - 2.0);
  EXPECT_EQ(oracle, 1.5);
  EXPECT_EQ(inner_adapt(theta, loss, 0.25, 2).at("theta").item(), oracle);
  EXPECT_EQ(inner_adapt(theta, loss, 0.25, 0).at("theta").item(), 0.0);
}

TEST(InnerAdapt, MatchedTargetsLeaveThetaUnchanged) {
  std::mt19937_64 rng(5);
  ParamSet theta = init_mpfn({3, 4, 1}, rng);
  Episode ep = random_episode("x", rng);
  std::vector<SampleWindow> ws = ep.d_tr;
  auto params = MpfnParams::from(theta);
  for (auto& w : ws) w.target = mpfn_forward(params, w, MpfnMode::full);
  ParamSet out = inner_adapt(theta, make_batch(ws), 0.5, 3, MpfnMode::full);
  EXPECT_TRUE(out == theta);
  EXPECT_THROW(inner_adapt(theta, WindowBatch{}, 0.5, 1, MpfnMode::full), DataError);
}

TEST(InnerAdapt, SmallStepStaysNearInit) {
  std::mt19937_64 rng(6);
  ParamSet theta = init_mpfn({3, 4, 1}, rng);
  auto prepared = prepare_episode(random_episode("x", rng), 30);
  auto loss = [&](const ParamSet& p) { return mpfn_loss(MpfnParams::from(p), prepared.train, MpfnMode::full); };
  double max_grad = 0.0;
  {
    Tape tape;
    GradMap g = tape.backward(loss(theta.watched(tape)));
    double sq = 0;
    for (const auto& [n, t] : g) for (double v : t.values()) sq += v * v;
    max_grad = std::sqrt(sq);
  }
  for (double alpha : {1e-2, 1e-4, 1e-6}) {
    ParamSet out = inner_adapt(theta, loss, alpha, 1);
    const auto a = theta.flatten(), b = out.flatten();
    double sq = 0;
    for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
    EXPECT_LE(std::sqrt(sq), alpha * 1 * max_grad * (1 + 1e-9));
  }
}

TEST(MetaParams, PrefixesPerMethod) {
  MetaConfig cfg = tiny_config();
  ParamSet full = init_meta_params(kTiny, cfg, 1);
  for (const char* prefix : {"theta0/mpfn/", "enc/", "dec/", "graphhead/", "mod/"}) {
    EXPECT_FALSE(full.with_prefix(prefix).empty()) << prefix;
  }
  EXPECT_EQ(full.at("mod/w").shape(), (Shape{theta0_of(full).total_dim(), 6}));
  cfg.ablation = Ablation::no_d;
  ParamSet no_d = init_meta_params(kTiny, cfg, 1);
  EXPECT_TRUE(no_d.with_prefix("enc/").empty());
  EXPECT_EQ(no_d.at("mod/w").cols(), 2u);
  cfg.ablation = Ablation::no_g;
  EXPECT_TRUE(init_meta_params(kTiny, cfg, 1).with_prefix("graphhead/").empty());
  cfg.gate = GateMode::identity;
  ParamSet maml = init_meta_params(kTiny, cfg, 1);
  EXPECT_EQ(maml.size(), theta0_of(maml).size());
  EXPECT_TRUE(theta0_of(maml) == theta0_of(full));

  std::stringstream buffer;
  write_checkpoint(buffer, full);
  EXPECT_TRUE(read_checkpoint(buffer) == full);
}

TEST(JointLoss, ZeroLambdaIsSummedTestLoss) {
  auto batch = tiny_batch(3, 7);
  MetaConfig cfg = tiny_config();
  cfg.lambda = 0.0;
  ParamSet meta = init_meta_params(kTiny, cfg, 2);
  MetaStepResult parts;
  const double joint = joint_loss(meta, batch, cfg, &parts).item();
  double sum = 0.0;
  for (const auto& ep : batch) sum += run_episode(meta, ep, cfg).test_loss.item();
  EXPECT_EQ(joint, sum);
  EXPECT_EQ(parts.joint_loss, parts.test_loss);
  EXPECT_GT(parts.reconstruction, 0.0);
  OptimizerState state;
  MetaStepResult step = meta_train_step(meta, batch, cfg, state);
  EXPECT_EQ(step.joint_loss, step.test_loss);
}

TEST(JointLoss, ZeroAlphaGateBiasGradientMatchesFiniteDifferences) {
  auto batch = tiny_batch(2, 8);
  MetaConfig cfg = tiny_config();
  cfg.alpha = 0.0;
  ParamSet meta = init_meta_params(kTiny, cfg, 3);
  const ParamSet rest = meta;
  ParamSet bias;
  bias.set("mod/b", meta.at("mod/b"));
  auto fn = [&](const ParamSet& b) {
    ParamSet m = rest;
    m.merge(b);
    return joint_loss(m, batch, cfg);
  };
  auto result = grad_check(fn, bias);
  EXPECT_LT(result.max_relative_error, 1e-4);
}

TEST(JointLoss, SecondOrderMetaGradientMatchesFiniteDifferences) {
  auto batch = tiny_batch(2, 9);
  MetaConfig cfg = tiny_config();
  cfg.order = MetaGradient::second_order;
  ParamSet meta = init_meta_params(kTiny, cfg, 4);
  auto result = grad_check([&](const ParamSet& m) { return joint_loss(m, batch, cfg); }, meta);
  EXPECT_LT(result.max_relative_error, 1e-4) << result.worst_name << "[" << result.worst_index << "]";
  EXPECT_EQ(result.coordinates, meta.total_dim());
}

TEST(JointLoss, FirstOrderMatchesOracleWithFrozenInnerGradient) {
  auto batch = tiny_batch(2, 10);
  MetaConfig cfg = tiny_config();
  cfg.lambda = 0.0;
  ParamSet meta = init_meta_params(kTiny, cfg, 5);
  Tape tape;
  GradMap analytic = tape.backward(joint_loss(meta.watched(tape), batch, cfg));

  // Oracle: inner gradients evaluated once at the base point, then frozen.
  std::vector<GradMap> frozen;
  for (const auto& ep : batch) {
    ParamSet init = run_episode(meta, ep, cfg).theta_init;
    Tape t;
    frozen.push_back(t.backward(mpfn_loss(MpfnParams::from(init.watched(t)), ep.train, MpfnMode::full)));
  }
  MetaConfig no_inner = cfg;
  no_inner.inner_steps = 0;
  auto fn = [&](const ParamSet& m) {
    Tensor total;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      ParamSet theta = run_episode(m, batch[i], no_inner).theta_init;
      ParamSet adapted;
      for (const auto& [name, t] : theta) adapted.set(name, sub(t, scale(frozen[i].at(name), cfg.alpha)));
      Tensor l = mpfn_loss(MpfnParams::from(adapted), batch[i].test, MpfnMode::full);
      total = total.empty() ? l : add(total, l);
    }
    return total;
  };
  auto result = compare_with_finite_differences(fn, meta, analytic);
  EXPECT_LT(result.max_relative_error, 1e-4) << result.worst_name;
}

TEST(MetaTrainStep, RepeatedStepsHalveJointLoss) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(100 + seed);
    std::vector<PreparedEpisode> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(prepare_episode(smooth_episode("s", rng), 4));
    MetaConfig cfg = tiny_config();
    ParamSet meta = init_meta_params(kTiny, cfg, seed);
    OptimizerState state;
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 50; ++step) {
      MetaStepResult r = meta_train_step(meta, batch, cfg, state);
      if (step == 0) first = r.joint_loss;
      last = r.joint_loss;
    }
    EXPECT_LE(last, 0.5 * first) << "seed " << seed << ": " << first << " -> " << last;
  }
}

TEST(MetaTrainStep, ForcedGateMatchesIdentityGateWithoutReconstruction) {
  auto batch = tiny_batch(3, 12);
  MetaConfig maml = tiny_config();
  maml.lambda = 0.0;
  maml.gate = GateMode::identity;
  MetaConfig forced = maml;
  forced.gate = GateMode::forced_one;
  ParamSet a = init_meta_params(kTiny, maml, 7), b = init_meta_params(kTiny, forced, 7);
  OptimizerState sa, sb;
  for (int step = 0; step < 10; ++step) {
    EXPECT_EQ(meta_train_step(a, batch, maml, sa).joint_loss,
              meta_train_step(b, batch, forced, sb).joint_loss)
        << "step " << step;
  }
  EXPECT_TRUE(theta0_of(a) == theta0_of(b));
}

TEST(MetaTestAdapt, ZeroStepsPredictFromCustomizedInit) {
  auto batch = tiny_batch(1, 13);
  MetaConfig cfg = tiny_config();
  cfg.inner_steps = 0;
  ParamSet meta = init_meta_params(kTiny, cfg, 8);
  AdaptResult r = meta_test_adapt(meta, batch[0], cfg);
  ParamSet init = run_episode(meta, batch[0], cfg).theta_init;
  EXPECT_TRUE(r.theta == init);
  NoGradGuard guard;
  Tensor pred = mpfn_forward(MpfnParams::from(init), batch[0].test, MpfnMode::full);
  ASSERT_EQ(r.predictions.size(), pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    EXPECT_EQ(r.predictions[i], batch[0].scaler.inverse_target(pred[i]));
  }
}

TEST(MetaTestAdapt, DeterministicAndReproducesTrainingInnerLoop) {
  auto batch = tiny_batch(2, 14);
  MetaConfig cfg = tiny_config();
  cfg.inner_steps = 2;
  ParamSet meta = init_meta_params(kTiny, cfg, 9);
  AdaptResult a = meta_test_adapt(meta, batch[1], cfg), b = meta_test_adapt(meta, batch[1], cfg);
  EXPECT_EQ(a.predictions, b.predictions);
  Tape tape;
  EpisodeOutcome o = run_episode(meta.watched(tape), batch[1], cfg);
  EXPECT_TRUE(o.theta_adapted.detached() == a.theta);
}

TEST(MetaTrainStep, ErrorsNameTheSegment) {
  auto batch = tiny_batch(1, 15);
  batch[0].graph_vector = Tensor();
  MetaConfig cfg = tiny_config();
  ParamSet meta = init_meta_params(kTiny, cfg, 10);
  OptimizerState state;
  try {
    meta_train_step(meta, batch, cfg, state);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("s0"), std::string::npos);
  }
  EXPECT_THROW(meta_train_step(meta, {}, cfg, state), DataError);
}
