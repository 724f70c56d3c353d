#include "spikeleak/model.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "spikeleak/errors.hpp"
#include "spikeleak/ops.hpp"
#include "spikeleak/rng.hpp"

namespace spikeleak {

const char* to_string(ModelKind k) { return k == ModelKind::ann ? "ann" : "snn"; }

const char* to_string(Activation a) {
  switch (a) {
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
    case Activation::if_neuron: return "if";
  }
  return "?";
}

const char* to_string(ResetMode r) { return r == ResetMode::hard_zero ? "hard_zero" : "soft_subtract"; }
const char* to_string(WeightInit w) { return w == WeightInit::fan_in ? "fan_in" : "uniform_half"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "ann") return ModelKind::ann;
  if (s == "snn") return ModelKind::snn;
  throw ValidationError("unknown model kind '" + s + "' (expected ann or snn)");
}

Activation parse_activation(const std::string& s) {
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "relu") return Activation::relu;
  if (s == "if" || s == "if_neuron") return Activation::if_neuron;
  throw ValidationError("unknown activation '" + s + "'");
}

ResetMode parse_reset_mode(const std::string& s) {
  if (s == "hard_zero" || s == "hard") return ResetMode::hard_zero;
  if (s == "soft_subtract" || s == "soft") return ResetMode::soft_subtract;
  throw ValidationError("unknown reset mode '" + s + "'");
}

WeightInit parse_weight_init(const std::string& s) {
  if (s == "fan_in") return WeightInit::fan_in;
  if (s == "uniform_half") return WeightInit::uniform_half;
  throw ValidationError("unknown weight init '" + s + "'");
}

void NeuronParams::validate() const {
  if (!(v_threshold > 0.0)) throw ValidationError("v_threshold must be > 0");
  if (!(alpha > 0.0)) throw ValidationError("surrogate alpha must be > 0");
}

ModelSpec ModelSpec::lenet(ModelKind kind, std::size_t channels, std::size_t side, std::size_t num_classes,
                           std::size_t timesteps) {
  ModelSpec s;
  s.kind = kind;
  s.in_channels = channels;
  s.height = side;
  s.width = side;
  s.convs = {{12, 5, 2, 2}, {12, 5, 2, 2}, {12, 5, 1, 2}};
  s.activation = kind == ModelKind::ann ? Activation::sigmoid : Activation::if_neuron;
  s.timesteps = kind == ModelKind::ann ? 1 : timesteps;
  s.num_classes = num_classes;
  s.validate();
  return s;
}

std::pair<std::size_t, std::size_t> ModelSpec::conv_output_hw(std::size_t i) const {
  std::size_t h = height, w = width;
  for (std::size_t l = 0; l <= i && l < convs.size(); ++l) {
    const auto& c = convs[l];
    if (c.kernel > h + 2 * c.padding || c.kernel > w + 2 * c.padding) {
      throw ValidationError("conv layer " + std::to_string(l) + " kernel exceeds padded input");
    }
    h = (h + 2 * c.padding - c.kernel) / c.stride + 1;
    w = (w + 2 * c.padding - c.kernel) / c.stride + 1;
  }
  return {h, w};
}

void ModelSpec::validate() const {
  if (in_channels == 0 || height == 0 || width == 0) throw ValidationError("model input dims must be positive");
  if (num_classes == 0) throw ValidationError("num_classes must be positive");
  for (const auto& c : convs) {
    if (c.out_channels == 0 || c.kernel == 0 || c.stride == 0) throw ValidationError("conv layer dims must be positive");
  }
  if (kind == ModelKind::snn) {
    if (timesteps < 1) throw ValidationError("snn requires T >= 1");
    if (activation != Activation::if_neuron) throw ValidationError("snn hidden layers must be IF neurons");
    neuron.validate();
  } else if (activation == Activation::if_neuron) {
    throw ValidationError("ann cannot use IF neurons");
  }
  if (!convs.empty()) conv_output_hw(convs.size() - 1);
}

Shape ModelSpec::input_shape(std::size_t batch) const { return {batch, in_channels, height, width}; }

std::size_t ModelSpec::feature_size() const {
  if (convs.empty()) return in_channels * height * width;
  const auto [h, w] = conv_output_hw(convs.size() - 1);
  return convs.back().out_channels * h * w;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t parse_size(const std::string& s, const std::string& field) {
  std::size_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ValidationError("model descriptor: bad integer '" + s + "' in " + field);
  }
  return v;
}

double parse_double(const std::string& s, const std::string& field) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("model descriptor: bad number '" + s + "' in " + field);
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

}  // namespace

std::string ModelSpec::descriptor() const {
  std::ostringstream o;
  o << "kind=" << to_string(kind) << " in=" << in_channels << 'x' << height << 'x' << width << " conv=";
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const auto& c = convs[i];
    o << (i ? "," : "") << c.out_channels << ':' << c.kernel << ':' << c.stride << ':' << c.padding;
  }
  o << " act=" << to_string(activation) << " K=" << num_classes << " T=" << timesteps
    << " vth=" << fmt_double(neuron.v_threshold) << " reset=" << to_string(neuron.reset_mode)
    << " alpha=" << fmt_double(neuron.alpha);
  return o.str();
}

ModelSpec ModelSpec::parse(const std::string& descriptor) {
  ModelSpec s;
  bool seen_kind = false;
  for (const auto& tok : split(descriptor, ' ')) {
    if (tok.empty()) continue;
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ValidationError("model descriptor: expected key=value, got '" + tok + "'");
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "kind") {
      s.kind = parse_model_kind(val);
      seen_kind = true;
    } else if (key == "in") {
      const auto d = split(val, 'x');
      if (d.size() != 3) throw ValidationError("model descriptor: in must be CxHxW");
      s.in_channels = parse_size(d[0], key);
      s.height = parse_size(d[1], key);
      s.width = parse_size(d[2], key);
    } else if (key == "conv") {
      s.convs.clear();
      for (const auto& layer : split(val, ',')) {
        const auto p = split(layer, ':');
        if (p.size() != 4) throw ValidationError("model descriptor: conv layer must be F:k:stride:pad");
        s.convs.push_back({parse_size(p[0], key), parse_size(p[1], key), parse_size(p[2], key), parse_size(p[3], key)});
      }
    } else if (key == "act") {
      s.activation = parse_activation(val);
    } else if (key == "K") {
      s.num_classes = parse_size(val, key);
    } else if (key == "T") {
      s.timesteps = parse_size(val, key);
    } else if (key == "vth") {
      s.neuron.v_threshold = parse_double(val, key);
    } else if (key == "reset") {
      s.neuron.reset_mode = parse_reset_mode(val);
    } else if (key == "alpha") {
      s.neuron.alpha = parse_double(val, key);
    } else {
      throw ValidationError("model descriptor: unknown key '" + key + "'");
    }
  }
  if (!seen_kind) throw ValidationError("model descriptor: missing kind");
  s.validate();
  return s;
}

std::size_t ParameterSet::total_numel() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.numel();
  return n;
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  out.names = names;
  for (const auto& t : tensors) {
    Tensor c = t.detach();
    c.set_requires_grad(t.requires_grad());
    out.tensors.push_back(c);
  }
  return out;
}

ParameterSet build_lenet(const ModelSpec& spec, std::uint64_t seed, WeightInit init) {
  spec.validate();
  Rng rng(seed);
  ParameterSet ps;
  auto add_layer = [&](const std::string& name, Shape wshape, std::size_t fan_in) {
    const double bound = init == WeightInit::fan_in ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.5;
    const std::size_t out = wshape[0];
    std::vector<double> w(shape_numel(wshape)), b(out);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    for (auto& v : b) v = rng.uniform(-bound, bound);
    ps.names.push_back(name + ".weight");
    ps.tensors.push_back(Tensor(std::move(wshape), std::move(w)).set_requires_grad(true));
    ps.names.push_back(name + ".bias");
    ps.tensors.push_back(Tensor({out}, std::move(b)).set_requires_grad(true));
  };
  std::size_t c = spec.in_channels;
  for (std::size_t i = 0; i < spec.convs.size(); ++i) {
    const auto& l = spec.convs[i];
    add_layer("conv" + std::to_string(i), {l.out_channels, c, l.kernel, l.kernel}, c * l.kernel * l.kernel);
    c = l.out_channels;
  }
  add_layer("fc", {spec.num_classes, spec.feature_size()}, spec.feature_size());
  return ps;
}

namespace {

void check_params(const ModelSpec& spec, const ParameterSet& params) {
  if (params.size() != 2 * spec.convs.size() + 2) {
    throw DimensionError("parameter set has " + std::to_string(params.size()) + " tensors, spec needs " +
                         std::to_string(2 * spec.convs.size() + 2));
  }
}

void check_image(const ModelSpec& spec, const Shape& s) {
  if (s.size() != 4 || s[1] != spec.in_channels || s[2] != spec.height || s[3] != spec.width) {
    throw DimensionError("model expects input [B," + std::to_string(spec.in_channels) + "," +
                         std::to_string(spec.height) + "," + std::to_string(spec.width) + "], got " +
                         shape_to_string(s));
  }
}

Tensor conv_layer(const ModelSpec& spec, const ParameterSet& p, std::size_t i, const Tensor& h) {
  const auto& l = spec.convs[i];
  return conv2d(h, p[2 * i], p[2 * i + 1], l.stride, l.padding);
}

Tensor classifier(const ModelSpec& spec, const ParameterSet& p, const Tensor& h) {
  const std::size_t L = spec.convs.size();
  return linear(flatten(h), p[2 * L], p[2 * L + 1]);
}

}  // namespace

Tensor forward_ann(const ModelSpec& spec, const ParameterSet& params, const Tensor& x, ForwardTrace* trace) {
  check_params(spec, params);
  check_image(spec, x.shape());
  Tensor h = x;
  for (std::size_t i = 0; i < spec.convs.size(); ++i) {
    Tensor z = conv_layer(spec, params, i, h);
    h = spec.activation == Activation::relu ? relu(z) : sigmoid(z);
    if (trace) trace->hidden.push_back(h);
  }
  return classifier(spec, params, h);
}

Tensor if_neuron_step(Tensor& membrane, const Tensor& current, const NeuronParams& neuron) {
  Tensor v = membrane.defined() ? add(membrane, current) : current;
  Tensor s = spike_heaviside_atan(add_scalar(v, -neuron.v_threshold), neuron.alpha);
  membrane = neuron.reset_mode == ResetMode::hard_zero ? mul(v, one_minus(s)) : sub(v, scale(s, neuron.v_threshold));
  return s;
}

Tensor forward_snn(const ModelSpec& spec, const ParameterSet& params, const Tensor& x, const NeuronParams& neuron,
                   ForwardTrace* trace) {
  check_params(spec, params);
  neuron.validate();
  const std::size_t T = spec.timesteps;
  const bool is_static = x.rank() == 4;
  if (is_static) {
    check_image(spec, x.shape());
  } else {
    if (x.rank() != 5) throw DimensionError("snn input must be [T,B,C,H,W] or [B,C,H,W], got " + shape_to_string(x.shape()));
    if (x.dim(0) != T) {
      throw DimensionError("snn input has T=" + std::to_string(x.dim(0)) + ", model expects T=" + std::to_string(T));
    }
    check_image(spec, Shape(x.shape().begin() + 1, x.shape().end()));
  }
  const std::size_t L = spec.convs.size();
  std::vector<Tensor> membrane(L);
  // A static input produces the same first-layer current at every step.
  Tensor static_current;
  if (is_static && L > 0) static_current = conv_layer(spec, params, 0, x);
  Tensor acc;
  for (std::size_t t = 0; t < T; ++t) {
    Tensor h = is_static ? x : select_leading(x, t);
    for (std::size_t i = 0; i < L; ++i) {
      Tensor current = (i == 0 && is_static) ? static_current : conv_layer(spec, params, i, h);
      h = if_neuron_step(membrane[i], current, neuron);
      if (trace) trace->hidden.push_back(h);
    }
    Tensor out = classifier(spec, params, h);
    acc = acc.defined() ? add(acc, out) : out;
  }
  return scale(acc, 1.0 / static_cast<double>(T));
}

Tensor forward(const ModelSpec& spec, const ParameterSet& params, const Tensor& x, ForwardTrace* trace) {
  return spec.kind == ModelKind::ann ? forward_ann(spec, params, x, trace)
                                     : forward_snn(spec, params, x, spec.neuron, trace);
}

Tensor classification_loss(const ModelSpec& spec, const ParameterSet& params, const Tensor& x, const Tensor& target) {
  return softmax_cross_entropy(forward(spec, params, x), target);
}

GradientSet parameter_gradients(const ModelSpec& spec, const ParameterSet& params, const Tensor& x,
                                const Tensor& target, bool create_graph) {
  for (const auto& p : params.tensors) {
    if (!p.requires_grad()) throw UsageError("parameter tensors must require grad");
  }
  if (create_graph) {
    if (!Tape::active()) throw UsageError("parameter_gradients(create_graph) needs an active tape");
    Tensor loss = classification_loss(spec, params, x, target);
    return GradientSet{autograd::grad(loss, params.span(), {.create_graph = true})};
  }
  Tape tape;
  TapeScope scope(tape);
  Tensor loss = classification_loss(spec, params, x, target);
  return GradientSet{autograd::grad(loss, params.span())};
}

GradientSet compute_victim_gradients(const ModelSpec& spec, const ParameterSet& params, const Tensor& x,
                                     std::size_t label) {
  if (label >= spec.num_classes) {
    throw UsageError("label " + std::to_string(label) + " out of range for " + std::to_string(spec.num_classes) +
                     " classes");
  }
  const std::size_t batch = x.rank() == 5 ? x.dim(1) : x.dim(0);
  if (batch != 1) throw UsageError("victim gradients are computed per sample (batch 1)");
  return parameter_gradients(spec, params, x, one_hot(label, spec.num_classes));
}

std::vector<std::size_t> predict(const ModelSpec& spec, const ParameterSet& params, const Tensor& x) {
  NoGradGuard guard;
  const Tensor logits = forward(spec, params, x);
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  std::vector<std::size_t> out(B);
  const auto d = logits.data();
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k) {
      if (d[b * K + k] > d[b * K + best]) best = k;
    }
    out[b] = best;
  }
  return out;
}

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

Bytes encode_checkpoint(const Checkpoint& ckpt) {
  check_params(ckpt.spec, ckpt.params);
  ByteWriter w;
  w.magic("SLMD");
  w.u32(kCheckpointVersion);
  w.str(ckpt.spec.descriptor());
  w.u32(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const Tensor& t = ckpt.params[i];
    w.str(i < ckpt.params.names.size() ? ckpt.params.names[i] : "");
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) w.f64(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("SLMD", "SLMD checkpoint");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) throw FormatError("unsupported SLMD version " + std::to_string(version), version_at);
  Checkpoint c;
  const std::size_t spec_at = r.offset();
  try {
    c.spec = ModelSpec::parse(r.str("spec descriptor"));
  } catch (const ValidationError& e) {
    throw FormatError(e.what(), spec_at);
  }
  const std::uint32_t nmeta = r.u32("metadata count");
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = r.str("metadata key");
    c.metadata[k] = r.str("metadata value");
  }
  const ParameterSet expected = build_lenet(c.spec, 0);
  const std::size_t count_at = r.offset();
  const std::uint32_t n = r.u32("tensor count");
  if (n != expected.size()) {
    throw FormatError("SLMD holds " + std::to_string(n) + " tensors, spec needs " + std::to_string(expected.size()),
                      count_at);
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    c.params.names.push_back(r.str("tensor name"));
    const std::size_t shape_at = r.offset();
    const std::uint32_t rank = r.u32("tensor rank");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u32("tensor dim"));
    if (shape != expected[i].shape()) {
      throw FormatError("SLMD tensor " + std::to_string(i) + " has shape " + shape_to_string(shape) + ", spec needs " +
                            shape_to_string(expected[i].shape()),
                        shape_at);
    }
    const std::size_t numel = shape_numel(shape);
    r.require(numel * 8, "tensor payload");
    std::vector<double> v(numel);
    for (auto& x : v) x = r.f64();
    c.params.tensors.push_back(Tensor(std::move(shape), std::move(v)).set_requires_grad(true));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after SLMD payload", r.offset());
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace spikeleak
