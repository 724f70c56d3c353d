#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "finite_diff.hpp"
#include "spikeleak/attacks.hpp"
#include "spikeleak/datasets.hpp"
#include "spikeleak/errors.hpp"
#include "spikeleak/metrics.hpp"
#include "spikeleak/ops.hpp"
#include "spikeleak/rng.hpp"

using namespace spikeleak;
using spikeleak::testing::random_tensor;

namespace {

ModelSpec toy_ann() { return ModelSpec::lenet(ModelKind::ann, 1, 8, 4); }
ModelSpec toy_snn(std::size_t T) { return ModelSpec::lenet(ModelKind::snn, 1, 8, 4, T); }

GradientSet gs(std::vector<Tensor> t) { return GradientSet{std::move(t)}; }

Objective quadratic(const std::vector<double>& a) {
  return [a](std::span<const double> x, std::vector<double>& g) {
    g.assign(x.size(), 0.0);
    double f = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      f += (x[i] - a[i]) * (x[i] - a[i]);
      g[i] = 2 * (x[i] - a[i]);
    }
    return f;
  };
}

// Non-quadratic smooth objective with a known minimum at 1.
Objective rosenbrock() {
  return [](std::span<const double> x, std::vector<double>& g) {
    g.assign(x.size(), 0.0);
    double f = 0.0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
      const double t = x[i + 1] - x[i] * x[i], u = 1 - x[i];
      f += 100 * t * t + u * u;
      g[i] += -400 * t * x[i] - 2 * u;
      g[i + 1] += 200 * t;
    }
    return f;
  };
}

std::size_t first_below(const std::vector<double>& trace, double level) {
  for (std::size_t i = 0; i < trace.size(); ++i)
    if (trace[i] < level) return i;
  return trace.size() + 1000;
}

}  // namespace

// ---- L-BFGS

TEST(Lbfgs, QuadraticConvergesWithinTenSteps) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> a(7), x0(7);
    for (auto& v : a) v = u(rng);
    for (auto& v : x0) v = u(rng);
    const auto f = quadratic(a);
    auto st = lbfgs_init(f, x0);
    for (int k = 0; k < 10; ++k) lbfgs_step(f, st, LbfgsConfig{});
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (st.x[i] - a[i]) * (st.x[i] - a[i]);
    EXPECT_LT(std::sqrt(d), 1e-8) << "trial " << trial;
  }
}

TEST(Lbfgs, FirstStepIsScaledSteepestDescent) {
  const std::vector<double> a = {1.0, -2.0, 0.5};
  const auto f = quadratic(a);
  auto st = lbfgs_init(f, {0.3, 0.1, -0.2});
  const auto x0 = st.x, g0 = st.g;
  ASSERT_EQ(lbfgs_step(f, st, LbfgsConfig{}), StepOutcome::accepted);
  // x1 - x0 must be a positive multiple of -g0.
  double ratio = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double r = (st.x[i] - x0[i]) / -g0[i];
    if (i == 0) ratio = r;
    EXPECT_NEAR(r, ratio, 1e-12);
  }
  EXPECT_GT(ratio, 0.0);
  double l1 = 0;
  for (double v : g0) l1 += std::abs(v);
  EXPECT_NEAR(ratio, std::min(1.0, 1.0 / l1), 1e-12);
}

TEST(Lbfgs, AcceptedStepsNeverIncreaseObjective) {
  const auto f = rosenbrock();
  auto st = lbfgs_init(f, {-1.2, 1.0, -0.5, 0.8});
  double prev = st.f;
  for (int k = 0; k < 200; ++k) {
    const auto out = lbfgs_step(f, st, LbfgsConfig{});
    if (out != StepOutcome::accepted) {
      EXPECT_EQ(st.f, prev);
      st.reset_history();
      continue;
    }
    EXPECT_LE(st.f, prev);
    prev = st.f;
  }
  EXPECT_LT(st.f, 1e-6);
}

TEST(Lbfgs, ProjectionAppliesToEveryIterate) {
  const auto f = quadratic({2.0, -1.0});
  const Projection box = [](std::vector<double>& x) {
    for (auto& v : x) v = std::clamp(v, 0.0, 1.0);
  };
  auto st = lbfgs_init(f, {0.5, 0.5}, box);
  for (int k = 0; k < 20; ++k) {
    if (lbfgs_step(f, st, LbfgsConfig{}, box) != StepOutcome::accepted) st.reset_history();
    for (double v : st.x) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_NEAR(st.x[0], 1.0, 1e-9);
  EXPECT_NEAR(st.x[1], 0.0, 1e-9);
}

TEST(Lbfgs, StallLeavesIterateUnchanged) {
  // Reported gradient has the wrong sign, so every trial along -g goes uphill.
  const Objective f = [](std::span<const double> x, std::vector<double>& g) {
    g.assign(1, -2 * x[0]);
    return x[0] * x[0];
  };
  auto st = lbfgs_init(f, {1.0});
  EXPECT_EQ(lbfgs_step(f, st, LbfgsConfig{}), StepOutcome::stalled);
  EXPECT_EQ(st.x[0], 1.0);
}

TEST(Lbfgs, NonFiniteTrialsReportDiverged) {
  const Objective f = [](std::span<const double> x, std::vector<double>& g) {
    g.assign(1, 1.0);
    return x[0] < 1.0 ? std::numeric_limits<double>::quiet_NaN() : x[0];
  };
  auto st = lbfgs_init(f, {1.0});
  EXPECT_EQ(lbfgs_step(f, st, LbfgsConfig{}), StepOutcome::diverged);
}

TEST(Lbfgs, SkipsPairsWithoutCurvature) {
  // Linear objective: s.y = 0 every step, so no pair is ever stored.
  const Objective f = [](std::span<const double> x, std::vector<double>& g) {
    g.assign(x.size(), 1.0);
    double s = 0;
    for (double v : x) s += v;
    return s;
  };
  auto st = lbfgs_init(f, {0.0, 0.0});
  for (int k = 0; k < 3; ++k) ASSERT_EQ(lbfgs_step(f, st, LbfgsConfig{}), StepOutcome::accepted);
  EXPECT_TRUE(st.history_empty());
}

TEST(Lbfgs, ConfigValidation) {
  LbfgsConfig c;
  c.history = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.lr = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}

// ---- gradient matching and label inference

TEST(GradientMatch, IdenticalSetsGiveZero) {
  std::mt19937_64 rng(1);
  const auto g = gs({random_tensor({3, 2}, rng), random_tensor({3}, rng)});
  EXPECT_EQ(gradient_match_loss(g, g).item(), 0.0);
}

TEST(GradientMatch, SingleLayerExample) {
  EXPECT_DOUBLE_EQ(gradient_match_loss(gs({Tensor({2}, {1, 2})}), gs({Tensor({2}, {0, 0})})).item(), 5.0);
}

TEST(GradientMatch, SumsEveryTensorIncludingBiases) {
  const auto a = gs({Tensor({2}, {1, 2}), Tensor({1}, {3})});
  const auto b = gs({Tensor({2}, {0, 0}), Tensor({1}, {1})});
  EXPECT_DOUBLE_EQ(gradient_match_loss(a, b).item(), 9.0);
}

TEST(GradientMatch, DerivativeIsTwiceTheDifference) {
  Tape tape;
  TapeScope scope(tape);
  Tensor d = Tensor({3}, {0.5, -1.0, 2.0}).set_requires_grad(true);
  const Tensor v({3}, {0.0, 1.0, 1.5});
  const auto g = autograd::grad(gradient_match_loss(gs({d}), gs({v})), {d});
  const std::vector<double> expect = {1.0, -4.0, 1.0};
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g[0].data()[i], expect[i]);
}

TEST(GradientMatch, StructureMismatchIsUsageError) {
  EXPECT_THROW(gradient_match_loss(gs({Tensor({2}, {1, 2})}), gs({Tensor({3}, {1, 2, 3})})), UsageError);
  EXPECT_THROW(gradient_match_loss(gs({Tensor({2}, {1, 2})}), gs({})), UsageError);
}

TEST(GradientMatch, SelfConsistencyOnModels) {
  for (auto spec : {toy_ann(), toy_snn(3)}) {
    const auto ps = build_lenet(spec, 4);
    std::mt19937_64 rng(9);
    const Tensor x = random_tensor(spec.input_shape(1), rng, 0.0, 1.0);
    const auto g = compute_victim_gradients(spec, ps, x, 2);
    EXPECT_EQ(gradient_match_loss(g, compute_victim_gradients(spec, ps, x, 2)).item(), 0.0);
  }
}

TEST(InferLabel, ArgminByConstruction) {
  std::vector<double> w(10 * 6, 0.1);
  for (std::size_t j = 0; j < 6; ++j) w[3 * 6 + j] = -1.0;
  EXPECT_EQ(infer_label_idlg(gs({Tensor({4}, {0, 0, 0, 0}), Tensor({10, 6}, w), Tensor({10}, std::vector<double>(10, 0.0))})), 3u);
}

TEST(InferLabel, TiesGoToLowestIndex) {
  std::vector<double> w(5 * 2, 0.5);
  for (std::size_t r : {1, 4}) w[r * 2] = w[r * 2 + 1] = -2.0;
  EXPECT_EQ(infer_label_idlg(gs({Tensor({5, 2}, w), Tensor({5}, std::vector<double>(5, 0.0))})), 1u);
}

TEST(InferLabel, MatchesTruthOnRandomAnnInstances) {
  const auto spec = ModelSpec::lenet(ModelKind::ann, 1, 32, 10);
  const auto data = load_mnist(SPIKELEAK_DATA_DIR "/mnist", "t10k");
  std::mt19937_64 rng(2024);
  int hits = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t idx = rng() % data.size();
    const std::size_t label = rng() % 10;
    const auto ps = build_lenet(spec, rng(), WeightInit::uniform_half);
    hits += infer_label_idlg(compute_victim_gradients(spec, ps, data.inputs[idx], label)) == label;
  }
  EXPECT_GE(hits, 99);
}

// ---- binarization

TEST(Binarize, StrictInequality) {
  const auto b = binarize_post(Tensor({3}, {0.2, 0.6, 0.5}), 0.5);
  EXPECT_EQ(b.data()[0], 0.0);
  EXPECT_EQ(b.data()[1], 1.0);
  EXPECT_EQ(b.data()[2], 0.0);
}

TEST(Binarize, MonotoneInTauAndIdempotent) {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({4, 1, 2, 5, 5}, rng, 0.0, 1.0);
  auto pop = [](const Tensor& t) {
    double s = 0;
    for (double v : t.data()) s += v;
    return s;
  };
  double prev = 1e9;
  for (double tau : {0.05, 0.2, 0.4, 0.6, 0.8, 0.95}) {
    const Tensor b = binarize_post(x, tau);
    EXPECT_LE(pop(b), prev);
    prev = pop(b);
    EXPECT_TRUE(bit_identical(binarize_post(b, tau), b));
  }
}

TEST(Binarize, SpikeTensorBecomesBinaryModality) {
  SpikeTensor s{Tensor({2, 1, 1, 1, 2}, {0.1, 0.9, 0.7, 0.0}), SpikeModality::dense, {}};
  const auto b = binarize_post(s, 0.5);
  EXPECT_EQ(b.modality, SpikeModality::binary_spikes);
  EXPECT_EQ(b.data.shape(), s.data.shape());
}

TEST(Binarize, TauOutsideUnitIntervalRejected) {
  EXPECT_THROW(binarize_post(Tensor({1}, {0.3}), 0.0), ValidationError);
  EXPECT_THROW(binarize_post(Tensor({1}, {0.3}), 1.0), ValidationError);
}

TEST(BinarizeInLoop, AllPointOneGivesZerosAndClearsHistory) {
  DummyState st{Tensor({2, 1, 1, 3, 3}, std::vector<double>(18, 0.1)), Tensor(), 0};
  LbfgsState opt;
  opt.s.push_back({1.0});
  opt.y.push_back({1.0});
  binarize_in_loop(st, 0.5, opt);
  for (double v : st.x.data()) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(opt.history_empty());
}

// ---- config and init

TEST(AttackConfig, Validation) {
  AttackConfig c;
  c.iterations = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.threshold = ThresholdStrategy::post_opt;
  c.tau = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c.tau = 0.5;
  EXPECT_NO_THROW(c.validate());
}

TEST(AttackConfig, EnumRoundTrip) {
  for (auto k : {AttackKind::dlg, AttackKind::idlg, AttackKind::grnn}) EXPECT_EQ(parse_attack_kind(to_string(k)), k);
  for (auto s : {ThresholdStrategy::none, ThresholdStrategy::post_opt, ThresholdStrategy::in_opt})
    EXPECT_EQ(parse_threshold_strategy(to_string(s)), s);
  EXPECT_THROW(parse_attack_kind("dgl"), ValidationError);
}

TEST(InitDummy, ImageUniformAndSpikesNonNegative) {
  AttackConfig cfg;
  const auto st = init_dummy_state(toy_ann(), InputModality::image, cfg);
  EXPECT_EQ(st.x.shape(), (Shape{1, 1, 8, 8}));
  for (double v : st.x.data()) {
    EXPECT_GE(v, 0.45);
    EXPECT_LE(v, 0.55);
  }
  EXPECT_EQ(st.y.shape(), (Shape{1, 4}));
  cfg.attack = AttackKind::idlg;
  const auto sp = init_dummy_state(toy_snn(3), InputModality::spikes, cfg);
  EXPECT_EQ(sp.x.shape(), (Shape{3, 1, 1, 8, 8}));
  for (double v : sp.x.data()) EXPECT_GE(v, 0.0);
  EXPECT_FALSE(sp.y.defined());
}

TEST(InitDummy, SpikesNeedSnn) {
  EXPECT_THROW(init_dummy_state(toy_ann(), InputModality::spikes, AttackConfig{}), UsageError);
}

// ---- DLG / iDLG at toy scale

class ToyAttack : public ::testing::Test {
 protected:
  ModelSpec spec = toy_ann();
  LabeledDataset data = synth_blob_dataset(20, 11);
  ParameterSet victim(std::size_t i) const { return build_lenet(spec, 500 + i, WeightInit::uniform_half); }
  GradientSet grads(std::size_t i) const {
    return compute_victim_gradients(spec, victim(i), data.inputs[i], data.labels[i]);
  }
};

TEST_F(ToyAttack, DlgFixedPoint) {
  AttackConfig cfg;
  cfg.iterations = 5;
  cfg.seed = 3;
  const auto st = init_dummy_state(spec, InputModality::image, cfg);
  const auto ps = victim(0);
  const auto g = parameter_gradients(spec, ps, st.x.detach(), softmax(st.y.detach()), false);
  const auto r = run_dlg(g, spec, ps, InputModality::image, cfg);
  EXPECT_EQ(r.loss_trace.front(), 0.0);
  EXPECT_TRUE(bit_identical(r.reconstruction, st.x.detach()));
  EXPECT_EQ(r.iterations, 0u);
}

TEST_F(ToyAttack, DlgRecoversToyImage) {
  AttackConfig cfg;
  cfg.iterations = 100;
  const auto r = run_dlg(grads(0), spec, victim(0), InputModality::image, cfg);
  EXPECT_NE(r.status, AttackStatus::diverged);
  EXPECT_GE(ssim(r.reconstruction, data.inputs[0]), 0.8);
  EXPECT_EQ(r.label, data.labels[0]);
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i) EXPECT_LE(r.loss_trace[i], r.loss_trace[i - 1]);
}

TEST_F(ToyAttack, IdlgReachesLowLossSoonerThanDlg) {
  AttackConfig cfg;
  cfg.iterations = 100;
  const auto g = grads(0);
  const auto d = run_dlg(g, spec, victim(0), InputModality::image, cfg);
  const auto i = run_idlg(g, spec, victim(0), InputModality::image, cfg);
  EXPECT_GE(ssim(i.reconstruction, data.inputs[0]), 0.8);
  EXPECT_LT(first_below(i.loss_trace, 1e-4), first_below(d.loss_trace, 1e-4));
}

TEST_F(ToyAttack, IdlgLabelMatchesConvergedDlg) {
  AttackConfig cfg;
  cfg.iterations = 100;
  int converged = 0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto g = grads(s);
    const auto d = run_dlg(g, spec, victim(s), InputModality::image, cfg);
    if (d.status == AttackStatus::diverged || d.final_loss > 1e-4) continue;
    ++converged;
    EXPECT_EQ(d.label, infer_label_idlg(g)) << "sample " << s;
  }
  EXPECT_GE(converged, 10);
}

TEST_F(ToyAttack, DeterministicForFixedSeed) {
  AttackConfig cfg;
  cfg.iterations = 20;
  cfg.seed = 77;
  const auto g = grads(1);
  const auto a = run_dlg(g, spec, victim(1), InputModality::image, cfg);
  const auto b = run_dlg(g, spec, victim(1), InputModality::image, cfg);
  EXPECT_TRUE(bit_identical(a.reconstruction, b.reconstruction));
  EXPECT_EQ(a.loss_trace, b.loss_trace);
}

TEST_F(ToyAttack, ImageStaysInUnitInterval) {
  AttackConfig cfg;
  cfg.iterations = 30;
  for (int it : {1, 3, 30}) {
    cfg.iterations = static_cast<std::size_t>(it);
    const auto r = run_idlg(grads(2), spec, victim(2), InputModality::image, cfg);
    for (double v : r.reconstruction.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST_F(ToyAttack, ThresholdNeedsSpikeModality) {
  AttackConfig cfg;
  cfg.threshold = ThresholdStrategy::post_opt;
  EXPECT_THROW(run_dlg(grads(0), spec, victim(0), InputModality::image, cfg), UsageError);
}

// ---- spike modality

class ToySpikes : public ::testing::Test {
 protected:
  static constexpr std::size_t T = 4;
  ModelSpec spec = toy_snn(T);
  ParameterSet ps = build_lenet(spec, 21, WeightInit::uniform_half);
  Tensor truth = [] {
    const auto img = synth_blob_dataset(1, 5).inputs[0];
    Rng rng(8);
    std::vector<double> v;
    for (std::size_t t = 0; t < T; ++t)
      for (double p : img.data()) v.push_back(rng.uniform() < p ? 1.0 : 0.0);
    return Tensor({T, 1, 1, 8, 8}, std::move(v));
  }();
  GradientSet g = compute_victim_gradients(spec, ps, truth, 1);
};

TEST_F(ToySpikes, SpikesStayNonNegativeAndInOptIsBinary) {
  AttackConfig cfg;
  cfg.attack = AttackKind::idlg;
  cfg.iterations = 10;
  const auto r = run_idlg(g, spec, ps, InputModality::spikes, cfg);
  for (double v : r.reconstruction.data()) EXPECT_GE(v, 0.0);
  cfg.threshold = ThresholdStrategy::in_opt;
  const auto b = run_idlg(g, spec, ps, InputModality::spikes, cfg);
  for (double v : b.reconstruction.data()) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST_F(ToySpikes, InOptNoWorseThanPostOptAtHighTau) {
  AttackConfig cfg;
  cfg.iterations = 50;
  for (double tau : {0.5, 0.75, 0.9}) {
    cfg.tau = tau;
    cfg.threshold = ThresholdStrategy::post_opt;
    const auto post = run_idlg(g, spec, ps, InputModality::spikes, cfg);
    cfg.threshold = ThresholdStrategy::in_opt;
    const auto in = run_idlg(g, spec, ps, InputModality::spikes, cfg);
    EXPECT_LE(l2_distance(in.reconstruction, truth), l2_distance(post.reconstruction, truth)) << "tau " << tau;
  }
}

// ---- GRNN

TEST(Grnn, OutputShapesForBothModalities) {
  AttackConfig cfg;
  cfg.attack = AttackKind::grnn;
  cfg.grnn.epochs = 2;
  cfg.grnn.hidden = 16;
  const auto data = synth_blob_dataset(2, 1);
  const auto ann = toy_ann();
  const auto pa = build_lenet(ann, 1, WeightInit::uniform_half);
  std::vector<GradientSet> ga;
  for (std::size_t i = 0; i < 2; ++i) ga.push_back(compute_victim_gradients(ann, pa, data.inputs[i], data.labels[i]));
  const auto ra = run_grnn(ga, {}, ann, pa, InputModality::image, cfg);
  ASSERT_EQ(ra.reconstructions.size(), 2u);
  EXPECT_EQ(ra.reconstructions[0].shape(), ann.input_shape(1));
  EXPECT_EQ(ra.labels, data.labels);
  EXPECT_EQ(grnn_generate(ra.generator, ga[0], ann, InputModality::image).shape(), ann.input_shape(1));

  const auto snn = toy_snn(2);
  const auto psn = build_lenet(snn, 1, WeightInit::uniform_half);
  const auto gsn = compute_victim_gradients(snn, psn, data.inputs[0], data.labels[0]);
  const auto rs = run_grnn({gsn}, {data.labels[0]}, snn, psn, InputModality::spikes, cfg);
  EXPECT_EQ(rs.reconstructions[0].shape(), (Shape{2, 1, 1, 8, 8}));
  for (double v : rs.reconstructions[0].data()) EXPECT_GE(v, 0.0);
}

TEST(Grnn, LossHalvesAndAnnBeatsSnn) {
  const auto data = synth_blob_dataset(8, 11);
  AttackConfig cfg;
  cfg.attack = AttackKind::grnn;
  cfg.grnn.epochs = 200;
  cfg.grnn.hidden = 256;
  auto mean_ssim = [&](const ModelSpec& spec, std::vector<double>* trace) {
    std::vector<GradientSet> obs;
    std::vector<ParameterSet> keep;
    const auto ps = build_lenet(spec, 31, WeightInit::uniform_half);
    for (std::size_t i = 0; i < data.size(); ++i)
      obs.push_back(compute_victim_gradients(spec, ps, data.inputs[i], data.labels[i]));
    const auto r = run_grnn(obs, data.labels, spec, ps, InputModality::image, cfg);
    EXPECT_NE(r.status, AttackStatus::diverged);
    if (trace) *trace = r.loss_trace;
    double s = 0;
    for (std::size_t i = 0; i < data.size(); ++i) s += ssim(r.reconstructions[i], data.inputs[i]);
    return s / static_cast<double>(data.size());
  };
  std::vector<double> trace;
  const double ann = mean_ssim(toy_ann(), &trace);
  ASSERT_FALSE(trace.empty());
  EXPECT_LT(trace.back(), 0.5 * trace.front());
  const double snn = mean_ssim(toy_snn(4), nullptr);
  EXPECT_GE(ann, 0.4);
  EXPECT_GE(ann - snn, 0.3);
}
