#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "finite_diff.hpp"
#include "reference_net.hpp"
#include "spikeleak/errors.hpp"
#include "spikeleak/model.hpp"
#include "spikeleak/ops.hpp"

using namespace spikeleak;
using spikeleak::testing::numeric_gradients;
using spikeleak::testing::random_tensor;
using spikeleak::testing::RefNet;
using spikeleak::testing::relative_error;
using spikeleak::testing::SurrogateTwin;
using spikeleak::testing::to_vector;
using spikeleak::testing::Vec;

namespace {

ModelSpec tiny_ann() { return ModelSpec::lenet(ModelKind::ann, 1, 8, 4); }

ModelSpec tiny_snn(std::size_t T = 3) { return ModelSpec::lenet(ModelKind::snn, 1, 8, 4, T); }

ParameterSet with_values(const ParameterSet& ps, std::size_t index, const Vec& v) {
  ParameterSet out = ps.clone();
  out.tensors[index] = Tensor(ps[index].shape(), v).set_requires_grad(true);
  return out;
}

Tensor uniform01(const Shape& s, std::mt19937_64& rng) { return random_tensor(s, rng, 0.0, 1.0); }

}  // namespace

TEST(BuildLenet, SameSeedIsBitIdentical) {
  const auto spec = ModelSpec::lenet(ModelKind::ann, 1, 32, 10);
  const auto a = build_lenet(spec, 7), b = build_lenet(spec, 7);
  ASSERT_EQ(a.size(), 8u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bit_identical(a[i], b[i])) << a.names[i];
}

TEST(BuildLenet, DifferentSeedsDiffer) {
  const auto spec = ModelSpec::lenet(ModelKind::ann, 1, 32, 10);
  const auto a = build_lenet(spec, 1), b = build_lenet(spec, 2);
  EXPECT_FALSE(bit_identical(a[0], b[0]));
}

TEST(BuildLenet, FanInBound) {
  const auto spec = ModelSpec::lenet(ModelKind::ann, 3, 32, 100);
  const auto ps = build_lenet(spec, 3);
  const std::vector<double> fan = {75, 75, 300, 300, 300, 300, 768, 768};
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const double bound = 1.0 / std::sqrt(fan[i]);
    for (double v : ps[i].data()) EXPECT_LE(std::abs(v), bound);
  }
  EXPECT_EQ(ps[6].shape(), (Shape{100, 768}));
}

TEST(BuildLenet, UniformHalfBound) {
  const auto ps = build_lenet(tiny_ann(), 3, WeightInit::uniform_half);
  double mx = 0.0;
  for (const auto& t : ps.tensors)
    for (double v : t.data()) mx = std::max(mx, std::abs(v));
  EXPECT_LE(mx, 0.5);
  EXPECT_GT(mx, 0.45);
}

TEST(ModelSpecTest, DescriptorRoundTrip) {
  auto s = ModelSpec::lenet(ModelKind::snn, 2, 32, 11, 20);
  s.neuron.reset_mode = ResetMode::soft_subtract;
  s.neuron.alpha = 0.1;
  const auto back = ModelSpec::parse(s.descriptor());
  EXPECT_EQ(back.descriptor(), s.descriptor());
  EXPECT_EQ(back.neuron.alpha, 0.1);
  EXPECT_EQ(s.feature_size(), 768u);
  EXPECT_EQ(tiny_ann().feature_size(), 48u);
}

TEST(ModelSpecTest, InvalidSpecsRejected) {
  auto s = tiny_snn();
  s.timesteps = 0;
  EXPECT_THROW(s.validate(), ValidationError);
  s = tiny_snn();
  s.neuron.v_threshold = 0.0;
  EXPECT_THROW(s.validate(), ValidationError);
  s = tiny_ann();
  s.activation = Activation::if_neuron;
  EXPECT_THROW(s.validate(), ValidationError);
  EXPECT_THROW(ModelSpec::parse("kind=ann bogus=1"), ValidationError);
}

TEST(ForwardAnn, ZeroWeightsGiveFinalBias) {
  const auto spec = tiny_ann();
  auto ps = build_lenet(spec, 1);
  for (std::size_t i = 0; i + 1 < ps.size(); ++i) ps.tensors[i] = Tensor::zeros(ps[i].shape());
  ps.tensors[6] = Tensor::zeros(ps[6].shape());
  const Tensor logits = forward_ann(spec, ps, Tensor::zeros({2, 1, 8, 8}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(logits[b * 4 + k], ps[7][k]);
}

TEST(ForwardAnn, IdenticalSamplesGiveIdenticalRows) {
  std::mt19937_64 rng(5);
  const auto spec = tiny_ann();
  const auto ps = build_lenet(spec, 1);
  const Tensor one = uniform01({1, 1, 8, 8}, rng);
  const Tensor two = broadcast_axis(reshape(one, {1, 8, 8}), 0, 2);
  const Tensor logits = forward_ann(spec, ps, two);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(logits[k], logits[4 + k]);
}

TEST(ForwardAnn, MatchesPlainLoopReference) {
  std::mt19937_64 rng(11);
  const auto spec = ModelSpec::lenet(ModelKind::ann, 3, 12, 5);
  const auto ps = build_lenet(spec, 4, WeightInit::uniform_half);
  const Tensor x = uniform01({2, 3, 12, 12}, rng);
  const Vec ref = RefNet(spec, ps).ann(to_vector(x), 2);
  EXPECT_LT(relative_error(to_vector(forward_ann(spec, ps, x)), ref), 1e-12);
}

TEST(ForwardAnn, WrongInputShapeThrows) {
  const auto spec = tiny_ann();
  const auto ps = build_lenet(spec, 1);
  EXPECT_THROW(forward_ann(spec, ps, Tensor::zeros({1, 1, 9, 8})), DimensionError);
  EXPECT_THROW(forward_ann(spec, ps, Tensor::zeros({1, 2, 8, 8})), DimensionError);
}

TEST(ForwardAnn, SigmoidActivationsInOpenUnitInterval) {
  std::mt19937_64 rng(2);
  const auto spec = tiny_ann();
  const auto ps = build_lenet(spec, 9, WeightInit::uniform_half);
  ForwardTrace trace;
  forward_ann(spec, ps, random_tensor({1, 1, 8, 8}, rng), &trace);
  ASSERT_EQ(trace.hidden.size(), 3u);
  for (const auto& h : trace.hidden)
    for (double v : h.data()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
}

// Gradient of the loss w.r.t. the input and every parameter, against central
// differences of the plain-loop reference.
TEST(ForwardAnn, EndToEndGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const auto spec = tiny_ann();
  const auto ps = build_lenet(spec, 5, WeightInit::uniform_half);
  const Tensor x = random_tensor({1, 1, 8, 8}, rng);
  const Tensor target = one_hot(2, 4);

  Tape tape;
  TapeScope scope(tape);
  Tensor xl = x.detach().set_requires_grad(true);
  std::vector<Tensor> wrt = ps.tensors;
  wrt.push_back(xl);
  const auto analytic = autograd::grad(classification_loss(spec, ps, xl, target), wrt);

  std::vector<Tensor> args = ps.tensors;
  args.push_back(x);
  const auto numeric = numeric_gradients(
      [&](const std::vector<Tensor>& a) {
        ParameterSet q;
        q.tensors.assign(a.begin(), a.end() - 1);
        return spikeleak::testing::ref_cross_entropy(RefNet(spec, q).ann(to_vector(a.back()), 1), 1, 4,
                                                     to_vector(target));
      },
      args);
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    EXPECT_LT(relative_error(to_vector(analytic[i]), numeric[i]), 1e-6) << "tensor " << i;
  }
}

TEST(IfNeuron, ConstantCurrentFiresEveryThirdStep) {
  NeuronParams n;
  Tensor v;
  const Tensor current = Tensor::full({1}, 0.4);
  std::vector<std::size_t> fired;
  for (std::size_t t = 1; t <= 12; ++t) {
    if (if_neuron_step(v, current, n)[0] == 1.0) fired.push_back(t);
  }
  EXPECT_EQ(fired, (std::vector<std::size_t>{3, 6, 9, 12}));
}

TEST(IfNeuron, SoftResetKeepsResidual) {
  NeuronParams n;
  n.reset_mode = ResetMode::soft_subtract;
  Tensor v;
  const Tensor current = Tensor::full({1}, 0.4);
  if_neuron_step(v, current, n);
  if_neuron_step(v, current, n);
  EXPECT_EQ(if_neuron_step(v, current, n)[0], 1.0);
  EXPECT_NEAR(v[0], 0.2, 1e-12);
}

TEST(ForwardSnn, ZeroInputGivesNoSpikesAndFinalBias) {
  const auto spec = tiny_snn(5);
  auto ps = build_lenet(spec, 1);
  // Conv biases alone would integrate up to threshold; the property is about the input.
  for (std::size_t l = 0; l < 3; ++l) ps.tensors[2 * l + 1] = Tensor::zeros(ps[2 * l + 1].shape());
  ForwardTrace trace;
  const Tensor logits = forward_snn(spec, ps, Tensor::zeros({5, 1, 1, 8, 8}), spec.neuron, &trace);
  for (const auto& h : trace.hidden)
    for (double v : h.data()) EXPECT_EQ(v, 0.0);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(logits[k], ps[7][k], 1e-15);
}

TEST(ForwardSnn, SingleStepEqualsStepActivationPass) {
  std::mt19937_64 rng(8);
  const auto spec = tiny_snn(1);
  const auto ps = build_lenet(spec, 2, WeightInit::uniform_half);
  Tensor img = uniform01({1, 1, 8, 8}, rng);
  std::vector<double> bin(img.data().begin(), img.data().end());
  for (auto& v : bin) v = v > 0.5 ? 1.0 : 0.0;
  const Tensor x({1, 1, 1, 8, 8}, bin);
  const Vec ref = RefNet(spec, ps).snn(bin, 1, false,
                                       [](std::size_t, std::size_t, std::size_t, double v) { return v >= 0.0 ? 1.0 : 0.0; });
  EXPECT_LT(relative_error(to_vector(forward_snn(spec, ps, x, spec.neuron)), ref), 1e-12);
}

TEST(ForwardSnn, RepeatedCallsIdenticalAndHiddenBinary) {
  std::mt19937_64 rng(9);
  const auto spec = tiny_snn(6);
  const auto ps = build_lenet(spec, 3, WeightInit::uniform_half);
  const Tensor x = uniform01({6, 1, 1, 8, 8}, rng);
  ForwardTrace trace;
  const Tensor a = forward_snn(spec, ps, x, spec.neuron, &trace);
  const Tensor b = forward_snn(spec, ps, x, spec.neuron);
  EXPECT_TRUE(bit_identical(a, b));
  ASSERT_EQ(trace.hidden.size(), 18u);
  std::size_t ones = 0;
  for (const auto& h : trace.hidden)
    for (double v : h.data()) {
      EXPECT_TRUE(v == 0.0 || v == 1.0);
      ones += v == 1.0;
    }
  EXPECT_GT(ones, 0u);
}

TEST(ForwardSnn, StaticImageEqualsExplicitReplication) {
  std::mt19937_64 rng(10);
  const auto spec = tiny_snn(4);
  const auto ps = build_lenet(spec, 3, WeightInit::uniform_half);
  const Tensor img = uniform01({1, 1, 8, 8}, rng);
  const Tensor rep = broadcast_axis(img, 0, 4);
  EXPECT_TRUE(bit_identical(forward_snn(spec, ps, img, spec.neuron), forward_snn(spec, ps, rep, spec.neuron)));
}

TEST(ForwardSnn, TimestepMismatchThrows) {
  const auto spec = tiny_snn(4);
  const auto ps = build_lenet(spec, 1);
  EXPECT_THROW(forward_snn(spec, ps, Tensor::zeros({3, 1, 1, 8, 8}), spec.neuron), DimensionError);
}

// The surrogate gradient of the whole SNN (input and all parameters, through time and
// through the reset) equals the exact derivative of the smooth twin network, which is
// measured here by finite differences of a plain-loop implementation.
TEST(ForwardSnn, SurrogateGradientMatchesSmoothTwin) {
  for (ResetMode mode : {ResetMode::hard_zero, ResetMode::soft_subtract}) {
    std::mt19937_64 rng(12);
    auto spec = tiny_snn(3);
    spec.neuron.reset_mode = mode;
    const auto ps = build_lenet(spec, 6, WeightInit::uniform_half);
    const Tensor x = uniform01({3, 1, 1, 8, 8}, rng);
    const Tensor target = one_hot(1, 4);

    Tape tape;
    TapeScope scope(tape);
    Tensor xl = x.detach().set_requires_grad(true);
    std::vector<Tensor> wrt = ps.tensors;
    wrt.push_back(xl);
    const auto analytic = autograd::grad(classification_loss(spec, ps, xl, target), wrt);

    SurrogateTwin twin{{}, spec.neuron.alpha};
    RefNet(spec, ps).snn(to_vector(x), 1, false, twin.recorder());
    std::vector<Tensor> args = ps.tensors;
    args.push_back(x);
    const auto numeric = numeric_gradients(
        [&](const std::vector<Tensor>& a) {
          ParameterSet q;
          q.tensors.assign(a.begin(), a.end() - 1);
          return spikeleak::testing::ref_cross_entropy(RefNet(spec, q).snn(to_vector(a.back()), 1, false, twin.twin()),
                                                       1, 4, to_vector(target));
        },
        args);
    for (std::size_t i = 0; i < wrt.size(); ++i) {
      EXPECT_LT(relative_error(to_vector(analytic[i]), numeric[i]), 1e-6) << "tensor " << i;
    }
  }
}

TEST(VictimGradients, FiniteAndDeterministic) {
  std::mt19937_64 rng(4);
  for (ModelKind kind : {ModelKind::ann, ModelKind::snn}) {
    const auto spec = ModelSpec::lenet(kind, 1, 32, 10, 4);
    const auto ps = build_lenet(spec, 1);
    const Tensor x = uniform01({1, 1, 32, 32}, rng);
    const auto g1 = compute_victim_gradients(spec, ps, x, 3);
    const auto g2 = compute_victim_gradients(spec, ps, x, 3);
    ASSERT_EQ(g1.size(), ps.size());
    EXPECT_TRUE(g1.all_finite());
    for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_TRUE(bit_identical(g1[i], g2[i]));
  }
}

TEST(VictimGradients, ParametersUntouched) {
  const auto spec = tiny_ann();
  const auto ps = build_lenet(spec, 1);
  const auto copy = ps.clone();
  compute_victim_gradients(spec, ps, Tensor::full({1, 1, 8, 8}, 0.3), 1);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    EXPECT_TRUE(bit_identical(ps[i], copy[i]));
    EXPECT_FALSE(ps[i].grad().has_value());
  }
}

TEST(VictimGradients, LastBiasIsSoftmaxMinusOneHot) {
  std::mt19937_64 rng(6);
  const auto spec = ModelSpec::lenet(ModelKind::ann, 1, 32, 10);
  const auto ps = build_lenet(spec, 2);
  const Tensor x = uniform01({1, 1, 32, 32}, rng);
  const std::size_t y = 7;
  const auto g = compute_victim_gradients(spec, ps, x, y);
  const Vec logits = RefNet(spec, ps).ann(to_vector(x), 1);
  double m = *std::max_element(logits.begin(), logits.end()), z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  for (std::size_t k = 0; k < 10; ++k) {
    const double expected = std::exp(logits[k] - m) / z - (k == y ? 1.0 : 0.0);
    EXPECT_NEAR(g[7][k], expected, 1e-14);
  }
}

TEST(VictimGradients, LabelOutOfRange) {
  const auto spec = tiny_ann();
  const auto ps = build_lenet(spec, 1);
  EXPECT_THROW(compute_victim_gradients(spec, ps, Tensor::zeros({1, 1, 8, 8}), 4), UsageError);
}

TEST(Checkpoint, RoundTripIsExact) {
  Checkpoint c{ModelSpec::lenet(ModelKind::snn, 2, 32, 11, 20), {}, {{"accuracy", "0.91"}}};
  c.params = build_lenet(c.spec, 42);
  const Bytes bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.spec.descriptor(), c.spec.descriptor());
  EXPECT_EQ(back.metadata.at("accuracy"), "0.91");
  EXPECT_EQ(back.params.names, c.params.names);
  for (std::size_t i = 0; i < c.params.size(); ++i) EXPECT_TRUE(bit_identical(back.params[i], c.params[i]));
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, MalformedInputRejected) {
  Checkpoint c{tiny_ann(), build_lenet(tiny_ann(), 1), {}};
  Bytes bytes = encode_checkpoint(c);
  Bytes bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  Bytes truncated(bytes.begin(), bytes.end() - 3);
  try {
    decode_checkpoint(truncated);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("expected"), std::string::npos);
    EXPECT_GT(e.offset(), 0u);
  }
  Bytes trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), FormatError);
}
