#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "spikeleak/binary_io.hpp"
#include "spikeleak/tensor.hpp"

namespace spikeleak {

enum class ModelKind { ann, snn };
enum class Activation { sigmoid, relu, if_neuron };
enum class ResetMode { hard_zero, soft_subtract };

/// How build_lenet draws initial weights. fan_in draws every tensor of a layer from
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)); uniform_half draws from U(-0.5, 0.5), the range
/// used by the usual DLG/iDLG victim models.
enum class WeightInit { fan_in, uniform_half };

const char* to_string(ModelKind k);
const char* to_string(Activation a);
const char* to_string(ResetMode r);
const char* to_string(WeightInit w);
ModelKind parse_model_kind(const std::string& s);
Activation parse_activation(const std::string& s);
ResetMode parse_reset_mode(const std::string& s);
WeightInit parse_weight_init(const std::string& s);

struct NeuronParams {
  double v_threshold = 1.0;
  ResetMode reset_mode = ResetMode::hard_zero;
  double alpha = 2.0;

  void validate() const;
};

struct ConvLayerSpec {
  std::size_t out_channels = 12;
  std::size_t kernel = 5;
  std::size_t stride = 1;
  std::size_t padding = 2;
};

/// Convolutional stack followed by one linear classifier. For kind=snn every hidden
/// activation is an IF neuron and the classifier output is averaged over T steps.
struct ModelSpec {
  ModelKind kind = ModelKind::ann;
  std::size_t in_channels = 1;
  std::size_t height = 32;
  std::size_t width = 32;
  std::vector<ConvLayerSpec> convs;
  Activation activation = Activation::sigmoid;
  std::size_t timesteps = 1;
  std::size_t num_classes = 10;
  NeuronParams neuron;

  /// Three 5x5 convolutions with 12 filters (strides 2, 2, 1; padding 2) then linear(K).
  static ModelSpec lenet(ModelKind kind, std::size_t channels, std::size_t side, std::size_t num_classes,
                         std::size_t timesteps = 20);

  void validate() const;
  /// [B,C,H,W]
  Shape input_shape(std::size_t batch = 1) const;
  /// Spatial size after conv layer i.
  std::pair<std::size_t, std::size_t> conv_output_hw(std::size_t i) const;
  /// Width of the flattened feature vector entering the classifier.
  std::size_t feature_size() const;

  /// Canonical one-line text form; the inverse of parse.
  std::string descriptor() const;
  static ModelSpec parse(const std::string& descriptor);

  bool operator==(const ModelSpec& other) const { return descriptor() == other.descriptor(); }
};

/// Named parameter tensors in layer order: conv0.weight, conv0.bias, ..., fc.weight, fc.bias.
struct ParameterSet {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  std::size_t size() const noexcept { return tensors.size(); }
  const Tensor& operator[](std::size_t i) const { return tensors[i]; }
  std::span<const Tensor> span() const noexcept { return tensors; }
  std::size_t total_numel() const;
  /// Deep copy: fresh leaves with the same values and requires_grad flags.
  ParameterSet clone() const;
};

ParameterSet build_lenet(const ModelSpec& spec, std::uint64_t seed, WeightInit init = WeightInit::fan_in);

/// Hidden activations captured during a forward pass (for the SNN, one entry per layer per step).
struct ForwardTrace {
  std::vector<Tensor> hidden;
};

/// ANN logits [B,K] for x of shape [B,C,H,W].
Tensor forward_ann(const ModelSpec& spec, const ParameterSet& params, const Tensor& x,
                   ForwardTrace* trace = nullptr);

/// One integrate-and-fire step: V <- V + I, s = H(V - v_th), then reset. membrane may be
/// undefined on the first step, meaning a zero potential. Returns the spikes.
Tensor if_neuron_step(Tensor& membrane, const Tensor& current, const NeuronParams& neuron);

/// SNN logits [B,K]: mean over T of the classifier output per step. x is either a
/// [T,B,C,H,W] spike tensor or a static [B,C,H,W] image fed identically at every step.
/// Membrane potentials start at zero on every call.
Tensor forward_snn(const ModelSpec& spec, const ParameterSet& params, const Tensor& x,
                   const NeuronParams& neuron, ForwardTrace* trace = nullptr);

/// Dispatches on spec.kind (the SNN uses spec.neuron).
Tensor forward(const ModelSpec& spec, const ParameterSet& params, const Tensor& x, ForwardTrace* trace = nullptr);

/// Cross entropy of the model output on x against a [B,K] target distribution.
Tensor classification_loss(const ModelSpec& spec, const ParameterSet& params, const Tensor& x,
                           const Tensor& target);

/// d loss / d params. With create_graph the result stays on the active tape (which must
/// exist) so it can be differentiated w.r.t. x or target.
GradientSet parameter_gradients(const ModelSpec& spec, const ParameterSet& params, const Tensor& x,
                                const Tensor& target, bool create_graph = false);

/// Gradients of the cross entropy at (x, one-hot label) for a single sample. Parameters
/// and their .grad buffers are left untouched.
GradientSet compute_victim_gradients(const ModelSpec& spec, const ParameterSet& params, const Tensor& x,
                                     std::size_t label);

/// Argmax of the model output for each row of a batch.
std::vector<std::size_t> predict(const ModelSpec& spec, const ParameterSet& params, const Tensor& x);

// SLMD checkpoint: "SLMD", u32 version, descriptor string, u32 metadata count with
// (key, value) strings, u32 tensor count, then per tensor: name string, u32 rank,
// u32 dims, f64 payload. Strings are u32 length + bytes; all integers little-endian.
struct Checkpoint {
  ModelSpec spec;
  ParameterSet params;
  std::map<std::string, std::string> metadata;
};

Bytes encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace spikeleak
