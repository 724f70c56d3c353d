#include <benchmark/benchmark.h>

#include "spikeleak/attacks.hpp"
#include "spikeleak/datasets.hpp"
#include "spikeleak/fl_harness.hpp"
#include "spikeleak/metrics.hpp"
#include "spikeleak/ops.hpp"
#include "spikeleak/spike_codec.hpp"

using namespace spikeleak;

namespace {

Tensor ramp(const Shape& s) {
  std::vector<double> v(shape_numel(s));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i % 17) / 17.0;
  return Tensor(s, std::move(v));
}

ModelSpec lenet(ModelKind kind, std::size_t T) { return ModelSpec::lenet(kind, 1, 32, 10, T); }

void BM_Conv2dForwardBackward(benchmark::State& st) {
  const Tensor x = ramp({1, 12, 16, 16}), w0 = ramp({12, 12, 5, 5}), b = Tensor::zeros({12});
  for (auto _ : st) {
    Tape tape;
    TapeScope scope(tape);
    Tensor w = w0.detach().set_requires_grad(true);
    benchmark::DoNotOptimize(autograd::grad(sum(conv2d(x, w, b, 2, 2)), {w}));
  }
}
BENCHMARK(BM_Conv2dForwardBackward);

void BM_Forward(benchmark::State& st) {
  const auto kind = st.range(0) ? ModelKind::snn : ModelKind::ann;
  const ModelSpec spec = lenet(kind, 20);
  const ParameterSet ps = build_lenet(spec, 1, WeightInit::uniform_half);
  const Tensor x = ramp(spec.input_shape(1));
  NoGradGuard no_grad;
  for (auto _ : st) benchmark::DoNotOptimize(forward(spec, ps, x));
  st.SetLabel(to_string(kind));
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_VictimGradients(benchmark::State& st) {
  const auto kind = st.range(0) ? ModelKind::snn : ModelKind::ann;
  const ModelSpec spec = lenet(kind, 20);
  const ParameterSet ps = build_lenet(spec, 1, WeightInit::uniform_half);
  const Tensor x = ramp(spec.input_shape(1));
  for (auto _ : st) benchmark::DoNotOptimize(compute_victim_gradients(spec, ps, x, 3));
  st.SetLabel(to_string(kind));
}
BENCHMARK(BM_VictimGradients)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// One attack objective evaluation: matching loss and its second-order gradient w.r.t. x.
void BM_MatchLossGradient(benchmark::State& st) {
  const auto kind = st.range(0) ? ModelKind::snn : ModelKind::ann;
  const ModelSpec spec = lenet(kind, 20);
  const ParameterSet ps = build_lenet(spec, 1, WeightInit::uniform_half);
  const GradientSet victim = compute_victim_gradients(spec, ps, ramp(spec.input_shape(1)), 3);
  const Tensor target = one_hot(3, 10);
  for (auto _ : st) {
    Tape tape;
    TapeScope scope(tape);
    Tensor x = Tensor::full(spec.input_shape(1), 0.5).set_requires_grad(true);
    const Tensor loss = gradient_match_loss(parameter_gradients(spec, ps, x, target, true), victim);
    benchmark::DoNotOptimize(autograd::grad(loss, {x}));
  }
  st.SetLabel(to_string(kind));
}
BENCHMARK(BM_MatchLossGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_DlgAnn10Iterations(benchmark::State& st) {
  const ModelSpec spec = lenet(ModelKind::ann, 1);
  const ParameterSet ps = build_lenet(spec, 1, WeightInit::uniform_half);
  const GradientSet victim = compute_victim_gradients(spec, ps, ramp(spec.input_shape(1)), 3);
  AttackConfig cfg;
  cfg.iterations = 10;
  for (auto _ : st) benchmark::DoNotOptimize(run_attack(victim, spec, ps, InputModality::image, cfg));
}
BENCHMARK(BM_DlgAnn10Iterations)->Unit(benchmark::kMillisecond);

void BM_SpktRoundTrip(benchmark::State& st) {
  const Tensor t = events_to_frames(synth_gesture_stream(2, 5, 32, 32, 1'000'000), 20).data;
  for (auto _ : st) benchmark::DoNotOptimize(decode_spike_tensor(encode_spike_tensor(t)));
  st.SetBytesProcessed(static_cast<std::int64_t>(st.iterations() * t.numel() * 4));
}
BENCHMARK(BM_SpktRoundTrip);

void BM_GradientMessageRoundTrip(benchmark::State& st) {
  const ModelSpec spec = lenet(ModelKind::ann, 1);
  LabeledDataset one;
  one.num_classes = 10;
  one.inputs = {ramp(spec.input_shape(1))};
  one.labels = {3};
  const ClientState client{1, one, spec, build_lenet(spec, 1)};
  const Bytes wire = client_round(client, 0, 0);
  for (auto _ : st) benchmark::DoNotOptimize(encode_gradient_message(decode_gradient_message(wire)));
  st.SetBytesProcessed(static_cast<std::int64_t>(st.iterations() * wire.size()));
}
BENCHMARK(BM_GradientMessageRoundTrip);

void BM_Ssim(benchmark::State& st) {
  const Tensor a = ramp({1, 1, 32, 32}), b = Tensor::full({1, 1, 32, 32}, 0.4);
  for (auto _ : st) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim);

}  // namespace
BENCHMARK_MAIN();
