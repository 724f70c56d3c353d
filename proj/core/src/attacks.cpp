#include "spikeleak/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "spikeleak/errors.hpp"
#include "spikeleak/ops.hpp"
#include "spikeleak/rng.hpp"

namespace spikeleak {

const char* to_string(AttackKind k) {
  switch (k) {
    case AttackKind::dlg: return "dlg";
    case AttackKind::idlg: return "idlg";
    case AttackKind::grnn: return "grnn";
  }
  return "?";
}

const char* to_string(ThresholdStrategy s) {
  switch (s) {
    case ThresholdStrategy::none: return "none";
    case ThresholdStrategy::post_opt: return "post_opt";
    case ThresholdStrategy::in_opt: return "in_opt";
  }
  return "?";
}

const char* to_string(InputModality m) { return m == InputModality::image ? "image" : "spikes"; }

const char* to_string(AttackStatus s) {
  switch (s) {
    case AttackStatus::ok: return "ok";
    case AttackStatus::stalled: return "stalled";
    case AttackStatus::diverged: return "diverged";
  }
  return "?";
}

AttackKind parse_attack_kind(const std::string& s) {
  if (s == "dlg") return AttackKind::dlg;
  if (s == "idlg") return AttackKind::idlg;
  if (s == "grnn") return AttackKind::grnn;
  throw ValidationError("unknown attack '" + s + "' (expected dlg, idlg or grnn)");
}

ThresholdStrategy parse_threshold_strategy(const std::string& s) {
  if (s == "none") return ThresholdStrategy::none;
  if (s == "post_opt" || s == "post") return ThresholdStrategy::post_opt;
  if (s == "in_opt" || s == "in") return ThresholdStrategy::in_opt;
  throw ValidationError("unknown threshold strategy '" + s + "'");
}

InputModality parse_input_modality(const std::string& s) {
  if (s == "image") return InputModality::image;
  if (s == "spikes") return InputModality::spikes;
  throw ValidationError("unknown input modality '" + s + "'");
}

void AttackConfig::validate() const {
  if (iterations < 1) throw ValidationError("attack iterations must be >= 1");
  lbfgs.validate();
  if (!(sigma > 0.0)) throw ValidationError("sigma must be > 0");
  if (threshold != ThresholdStrategy::none && !(tau > 0.0 && tau < 1.0)) {
    throw ValidationError("tau must lie in (0,1) when a threshold strategy is set");
  }
  if (attack == AttackKind::grnn) {
    if (grnn.epochs < 1) throw ValidationError("grnn epochs must be >= 1");
    if (!(grnn.lr > 0.0)) throw ValidationError("grnn learning rate must be > 0");
    if (grnn.hidden < 1) throw ValidationError("grnn hidden width must be >= 1");
  }
}

Tensor gradient_match_loss(const GradientSet& g_dummy, const GradientSet& g_victim) {
  if (g_dummy.size() != g_victim.size() || g_dummy.empty()) {
    throw UsageError("gradient sets differ in layer count: " + std::to_string(g_dummy.size()) + " vs " +
                     std::to_string(g_victim.size()));
  }
  Tensor total;
  for (std::size_t i = 0; i < g_dummy.size(); ++i) {
    if (g_dummy[i].shape() != g_victim[i].shape()) {
      throw UsageError("gradient entry " + std::to_string(i) + " shape " + shape_to_string(g_dummy[i].shape()) +
                       " vs " + shape_to_string(g_victim[i].shape()));
    }
    Tensor term = squared_difference_sum(g_dummy[i], g_victim[i]);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

std::size_t infer_label_idlg(const GradientSet& g_victim) {
  if (g_victim.size() < 2) throw UsageError("gradient set has no final linear layer");
  const Tensor& w = g_victim[g_victim.size() - 2];
  if (w.rank() != 2) throw UsageError("final layer weight gradient must be [K,D]");
  const std::size_t K = w.dim(0), D = w.dim(1);
  const auto d = w.data();
  std::size_t best = 0;
  double best_sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < D; ++j) s += d[k * D + j];
    if (k == 0 || s < best_sum) {
      best = k;
      best_sum = s;
    }
  }
  return best;
}

Tensor binarize_post(const Tensor& x, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("tau must lie in (0,1)");
  std::vector<double> v(x.data().begin(), x.data().end());
  for (auto& e : v) e = e > tau ? 1.0 : 0.0;
  return Tensor(x.shape(), std::move(v));
}

SpikeTensor binarize_post(const SpikeTensor& x, double tau) {
  return SpikeTensor{binarize_post(x.data, tau), SpikeModality::binary_spikes, {}};
}

void binarize_in_loop(DummyState& state, double tau, LbfgsState& optimizer) {
  Tensor b = binarize_post(state.x, tau);
  state.x.assign(b.data());
  optimizer.reset_history();
}

namespace {

Shape dummy_shape(const ModelSpec& spec, InputModality modality) {
  if (modality == InputModality::image) return spec.input_shape(1);
  if (spec.kind != ModelKind::snn) throw UsageError("spike-modality attacks need an SNN victim");
  return {spec.timesteps, 1, spec.in_channels, spec.height, spec.width};
}

}  // namespace

DummyState init_dummy_state(const ModelSpec& spec, InputModality modality, const AttackConfig& cfg) {
  DummyState st;
  const Shape xs = dummy_shape(spec, modality);
  if (modality == InputModality::image) {
    st.x = init_dummy_image(Shape{1, xs[0], xs[1], xs[2], xs[3]}, derive_seed(cfg.seed, 1)).image;
  } else {
    st.x = init_dummy_spikes(xs, cfg.sigma, derive_seed(cfg.seed, 1)).data;
  }
  if (cfg.attack == AttackKind::dlg) {
    Rng rng(derive_seed(cfg.seed, 2));
    std::vector<double> y(spec.num_classes);
    for (auto& v : y) v = rng.normal();
    st.y = Tensor({1, spec.num_classes}, std::move(y)).set_requires_grad(true);
  }
  return st;
}

namespace {

// Gradient-matching objective over the flattened (x', y') vector.
struct MatchObjective {
  const GradientSet& victim;
  const ModelSpec& spec;
  const ParameterSet& params;
  Shape x_shape;
  std::size_t x_numel;
  bool learn_label;
  Tensor fixed_target;

  double operator()(std::span<const double> flat, std::vector<double>& grad) const {
    Tape tape;
    TapeScope scope(tape);
    Tensor x(x_shape, std::vector<double>(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(x_numel)));
    x.set_requires_grad(true);
    std::vector<Tensor> wrt{x};
    Tensor target = fixed_target;
    if (learn_label) {
      Tensor y({1, spec.num_classes}, std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(x_numel), flat.end()));
      y.set_requires_grad(true);
      wrt.push_back(y);
      target = softmax(y);
    }
    const GradientSet gd = parameter_gradients(spec, params, x, target, true);
    const Tensor loss = gradient_match_loss(gd, victim);
    const auto g = autograd::grad(loss, wrt);
    grad.clear();
    for (const auto& t : g) grad.insert(grad.end(), t.data().begin(), t.data().end());
    return loss.item();
  }
};

std::vector<double> flatten_state(const DummyState& st) {
  std::vector<double> v(st.x.data().begin(), st.x.data().end());
  if (st.y.defined()) v.insert(v.end(), st.y.data().begin(), st.y.data().end());
  return v;
}

AttackResult run_gradient_attack(const GradientSet& victim, const ModelSpec& spec, const ParameterSet& params,
                                 InputModality modality, const AttackConfig& cfg, bool learn_label) {
  cfg.validate();
  if (cfg.threshold != ThresholdStrategy::none && modality != InputModality::spikes) {
    throw UsageError("threshold strategies apply to spike-modality attacks only");
  }
  if (victim.size() != params.size()) throw UsageError("victim gradients do not match the model's parameter list");
  AttackConfig init_cfg = cfg;
  init_cfg.attack = learn_label ? AttackKind::dlg : AttackKind::idlg;
  DummyState state = init_dummy_state(spec, modality, init_cfg);
  const std::size_t n = state.x.numel();
  const std::size_t fixed_label = learn_label ? 0 : infer_label_idlg(victim);

  MatchObjective objective{victim, spec, params, state.x.shape(), n, learn_label,
                           learn_label ? Tensor() : one_hot(fixed_label, spec.num_classes)};
  const bool image = modality == InputModality::image;
  Projection project = [n, image](std::vector<double>& v) {
    for (std::size_t i = 0; i < n; ++i) v[i] = image ? std::clamp(v[i], 0.0, 1.0) : std::max(v[i], 0.0);
  };
  Objective f = [&objective](std::span<const double> x, std::vector<double>& g) { return objective(x, g); };

  auto write_back = [&](const LbfgsState& opt) {
    state.x.assign(std::span<const double>(opt.x).subspan(0, n));
    if (learn_label) state.y.assign(std::span<const double>(opt.x).subspan(n));
  };
  auto binarize = [&](LbfgsState& opt) {
    write_back(opt);
    binarize_in_loop(state, cfg.tau, opt);
    std::copy(state.x.data().begin(), state.x.data().end(), opt.x.begin());
    opt.f = f(opt.x, opt.g);
    ++opt.evaluations;
  };

  AttackResult result;
  LbfgsState opt = lbfgs_init(f, flatten_state(state), project);
  const bool in_opt = cfg.threshold == ThresholdStrategy::in_opt;
  result.loss_trace.push_back(opt.f);
  if (!std::isfinite(opt.f)) result.status = AttackStatus::diverged;

  std::vector<double> previous = opt.x;
  for (std::size_t k = 0; k < cfg.iterations && result.status == AttackStatus::ok; ++k) {
    if (opt.f == 0.0) break;
    StepOutcome outcome = lbfgs_step(f, opt, cfg.lbfgs, project);
    if (outcome == StepOutcome::stalled && !opt.history_empty()) {
      // Stale curvature pairs can leave no acceptable step; retry from steepest descent.
      opt.reset_history();
      outcome = lbfgs_step(f, opt, cfg.lbfgs, project);
    }
    if (outcome == StepOutcome::diverged) {
      result.status = AttackStatus::diverged;
      break;
    }
    if (outcome == StepOutcome::stalled) {
      result.status = AttackStatus::stalled;
      break;
    }
    ++result.iterations;
    if (in_opt) {
      binarize(opt);
      // Same binary iterate and empty history: every further iteration repeats this one.
      if (opt.x == previous) {
        result.loss_trace.push_back(opt.f);
        break;
      }
      previous = opt.x;
    }
    if (!std::isfinite(opt.f)) {
      result.status = AttackStatus::diverged;
      break;
    }
    result.loss_trace.push_back(opt.f);
  }

  write_back(opt);
  state.iteration = result.iterations;
  result.raw = state.x.detach();
  result.final_loss = opt.f;
  // in_opt output is binary already unless the very first step stalled; thresholding is idempotent.
  result.reconstruction =
      cfg.threshold != ThresholdStrategy::none ? binarize_post(result.raw, cfg.tau) : result.raw;
  if (learn_label) {
    const auto y = state.y.data();
    result.label = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  } else {
    result.label = fixed_label;
  }
  return result;
}

}  // namespace

AttackResult run_dlg(const GradientSet& victim, const ModelSpec& spec, const ParameterSet& params,
                     InputModality modality, const AttackConfig& cfg) {
  return run_gradient_attack(victim, spec, params, modality, cfg, true);
}

AttackResult run_idlg(const GradientSet& victim, const ModelSpec& spec, const ParameterSet& params,
                      InputModality modality, const AttackConfig& cfg) {
  return run_gradient_attack(victim, spec, params, modality, cfg, false);
}

AttackResult run_attack(const GradientSet& victim, const ModelSpec& spec, const ParameterSet& params,
                        InputModality modality, const AttackConfig& cfg) {
  switch (cfg.attack) {
    case AttackKind::dlg: return run_dlg(victim, spec, params, modality, cfg);
    case AttackKind::idlg: return run_idlg(victim, spec, params, modality, cfg);
    case AttackKind::grnn: break;
  }
  throw UsageError("run_attack handles dlg and idlg; use run_grnn for grnn");
}

namespace {

Tensor gradient_features(const std::vector<GradientSet>& victims) {
  const std::size_t D = victims.front().total_numel();
  std::vector<double> f;
  f.reserve(victims.size() * D);
  for (const auto& g : victims) {
    if (g.total_numel() != D) throw UsageError("observed gradients differ in size");
    std::vector<double> v = g.flatten();
    double norm = 0.0;
    for (double e : v) norm += e * e;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (auto& e : v) e /= norm;
    f.insert(f.end(), v.begin(), v.end());
  }
  return Tensor({victims.size(), D}, std::move(f));
}

Tensor generator_forward(const ParameterSet& gen, const Tensor& features, InputModality modality) {
  Tensor h = tanh(linear(features, gen[0], gen[1]));
  h = tanh(linear(h, gen[2], gen[3]));
  Tensor out = linear(h, gen[4], gen[5]);
  return modality == InputModality::image ? sigmoid(out) : softplus(out);
}

Shape sample_shape(const ModelSpec& spec, InputModality modality) { return dummy_shape(spec, modality); }

}  // namespace

Tensor grnn_generate(const ParameterSet& generator, const GradientSet& victim, const ModelSpec& spec,
                     InputModality modality) {
  NoGradGuard guard;
  const Tensor out = generator_forward(generator, gradient_features({victim}), modality);
  return reshape(out, sample_shape(spec, modality));
}

GrnnResult run_grnn(const std::vector<GradientSet>& victims, std::vector<std::size_t> labels, const ModelSpec& spec,
                    const ParameterSet& params, InputModality modality, const AttackConfig& cfg) {
  cfg.validate();
  if (victims.empty()) throw UsageError("run_grnn needs at least one observed gradient");
  if (labels.empty()) {
    for (const auto& g : victims) labels.push_back(infer_label_idlg(g));
  }
  if (labels.size() != victims.size()) throw UsageError("run_grnn: one label per observed gradient");
  const Shape xs = sample_shape(spec, modality);
  const std::size_t out_dim = shape_numel(xs);
  const std::size_t n = victims.size();
  const Tensor features = gradient_features(victims);
  const std::size_t D = features.dim(1), Hd = cfg.grnn.hidden;

  GrnnResult result;
  result.labels = labels;
  Rng rng(derive_seed(cfg.seed, 3));
  auto add_layer = [&](const std::string& name, std::size_t out, std::size_t in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(out * in), b(out);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    for (auto& v : b) v = rng.uniform(-bound, bound);
    result.generator.names.push_back(name + ".weight");
    result.generator.tensors.push_back(Tensor({out, in}, std::move(w)).set_requires_grad(true));
    result.generator.names.push_back(name + ".bias");
    result.generator.tensors.push_back(Tensor({out}, std::move(b)).set_requires_grad(true));
  };
  add_layer("fc0", Hd, D);
  add_layer("fc1", Hd, Hd);
  add_layer("out", out_dim, Hd);
  ParameterSet& gen = result.generator;

  std::vector<Tensor> targets;
  for (std::size_t lab : labels) targets.push_back(one_hot(lab, spec.num_classes));

  // Adam state.
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<std::vector<double>> m(gen.size()), v(gen.size());
  for (std::size_t i = 0; i < gen.size(); ++i) {
    m[i].assign(gen[i].numel(), 0.0);
    v[i].assign(gen[i].numel(), 0.0);
  }

  for (std::size_t epoch = 0; epoch < cfg.grnn.epochs; ++epoch) {
    std::vector<Tensor> grads;
    double loss_value;
    {
      Tape tape;
      TapeScope scope(tape);
      const Tensor out = generator_forward(gen, features, modality);
      Tensor total;
      for (std::size_t i = 0; i < n; ++i) {
        const Tensor x = reshape(select_leading(out, i), xs);
        const Tensor term = gradient_match_loss(parameter_gradients(spec, params, x, targets[i], true), victims[i]);
        total = total.defined() ? add(total, term) : term;
      }
      const Tensor loss = scale(total, 1.0 / static_cast<double>(n));
      loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        result.status = AttackStatus::diverged;
        result.loss_trace.push_back(loss_value);
        break;
      }
      grads = autograd::grad(loss, gen.span());
    }
    result.loss_trace.push_back(loss_value);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(epoch + 1));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(epoch + 1));
    for (std::size_t p = 0; p < gen.size(); ++p) {
      const auto g = grads[p].data();
      std::vector<double> w(gen[p].data().begin(), gen[p].data().end());
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[p][j] = b1 * m[p][j] + (1 - b1) * g[j];
        v[p][j] = b2 * v[p][j] + (1 - b2) * g[j] * g[j];
        w[j] -= cfg.grnn.lr * (m[p][j] / c1) / (std::sqrt(v[p][j] / c2) + eps);
      }
      gen.tensors[p].assign(w);
    }
  }

  Tensor out;
  {
    NoGradGuard guard;
    out = generator_forward(gen, features, modality);
  }
  double final_loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor x;
    {
      NoGradGuard guard;
      x = reshape(select_leading(out, i), xs);
    }
    result.reconstructions.push_back(x);
    if (result.status != AttackStatus::diverged) {
      final_loss += gradient_match_loss(parameter_gradients(spec, params, x, targets[i]), victims[i]).item();
    }
  }
  if (result.status != AttackStatus::diverged) {
    final_loss /= static_cast<double>(n);
    result.loss_trace.push_back(final_loss);
    if (!std::isfinite(final_loss)) result.status = AttackStatus::diverged;
  }
  return result;
}

}  // namespace spikeleak
