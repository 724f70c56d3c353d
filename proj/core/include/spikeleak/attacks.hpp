#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "spikeleak/lbfgs.hpp"
#include "spikeleak/model.hpp"
#include "spikeleak/spike_codec.hpp"
#include "spikeleak/tensor.hpp"

namespace spikeleak {

enum class AttackKind { dlg, idlg, grnn };
enum class ThresholdStrategy { none, post_opt, in_opt };
/// What the dummy input is: a [B,C,H,W] image (fed to an SNN by replication over T) or a
/// full [T,B,C,H,W] spike tensor.
enum class InputModality { image, spikes };
enum class AttackStatus { ok, stalled, diverged };

const char* to_string(AttackKind k);
const char* to_string(ThresholdStrategy s);
const char* to_string(InputModality m);
const char* to_string(AttackStatus s);
AttackKind parse_attack_kind(const std::string& s);
ThresholdStrategy parse_threshold_strategy(const std::string& s);
InputModality parse_input_modality(const std::string& s);

struct GrnnConfig {
  std::size_t epochs = 300;
  /// Adam step size.
  double lr = 1e-3;
  std::size_t hidden = 1024;
};

struct AttackConfig {
  AttackKind attack = AttackKind::dlg;
  std::size_t iterations = 300;
  LbfgsConfig lbfgs;
  /// Scale of the folded-normal spike dummy.
  double sigma = 0.1;
  double tau = 0.5;
  ThresholdStrategy threshold = ThresholdStrategy::none;
  std::uint64_t seed = 0;
  GrnnConfig grnn;

  void validate() const;
};

/// Optimization variables: x (image or spike leaf) and, for DLG, label logits y.
struct DummyState {
  Tensor x;
  Tensor y;
  std::size_t iteration = 0;
};

/// Sum over every tensor pair of ||a - b||^2. Differentiable w.r.t. g_dummy.
Tensor gradient_match_loss(const GradientSet& g_dummy, const GradientSet& g_victim);

/// Row of the last linear layer's weight gradient with the smallest sum (ties go to the
/// lowest index).
std::size_t infer_label_idlg(const GradientSet& g_victim);

/// Elementwise x > tau, so a value equal to tau maps to 0.
Tensor binarize_post(const Tensor& x, double tau);
SpikeTensor binarize_post(const SpikeTensor& x, double tau);

/// Replaces state.x by its binarization and clears the optimizer history, since the
/// iterate jumped discontinuously.
void binarize_in_loop(DummyState& state, double tau, LbfgsState& optimizer);

/// Initial dummy for one sample: U(0.45,0.55) image or |N(0,sigma)| spikes; DLG also gets
/// N(0,1) label logits. Deterministic in cfg.seed.
DummyState init_dummy_state(const ModelSpec& spec, InputModality modality, const AttackConfig& cfg);

struct AttackResult {
  AttackStatus status = AttackStatus::ok;
  /// Final x' (thresholded whenever a strategy is configured).
  Tensor reconstruction;
  /// x' before the final thresholding.
  Tensor raw;
  std::size_t label = 0;
  /// Loss at the start and after every accepted iteration.
  std::vector<double> loss_trace;
  std::size_t iterations = 0;
  double final_loss = 0.0;
};

/// DLG: jointly optimizes x' and soft label logits y' by L-BFGS on the gradient-matching
/// loss. Images are clamped to [0,1] and spikes to >= 0 after every step.
AttackResult run_dlg(const GradientSet& victim, const ModelSpec& spec, const ParameterSet& params,
                     InputModality modality, const AttackConfig& cfg);

/// iDLG: label from infer_label_idlg, held fixed; only x' is optimized.
AttackResult run_idlg(const GradientSet& victim, const ModelSpec& spec, const ParameterSet& params,
                      InputModality modality, const AttackConfig& cfg);

/// Dispatches to run_dlg or run_idlg on cfg.attack.
AttackResult run_attack(const GradientSet& victim, const ModelSpec& spec, const ParameterSet& params,
                        InputModality modality, const AttackConfig& cfg);

struct GrnnResult {
  AttackStatus status = AttackStatus::ok;
  /// fc0.weight, fc0.bias, fc1.weight, fc1.bias, out.weight, out.bias.
  ParameterSet generator;
  std::vector<Tensor> reconstructions;
  std::vector<std::size_t> labels;
  /// Mean matching loss per epoch (before that epoch's update).
  std::vector<double> loss_trace;
};

/// Trains a generator mapping L2-normalized flattened victim gradients to inputs
/// (linear -> tanh -> linear -> tanh -> linear -> sigmoid for images, softplus for
/// spikes) by Adam on the mean gradient-matching loss over all observed gradients.
/// labels may be empty, in which case each label is inferred with infer_label_idlg.
GrnnResult run_grnn(const std::vector<GradientSet>& victims, std::vector<std::size_t> labels, const ModelSpec& spec,
                    const ParameterSet& params, InputModality modality, const AttackConfig& cfg);

/// Generator output for one observed gradient, shaped like the model input.
Tensor grnn_generate(const ParameterSet& generator, const GradientSet& victim, const ModelSpec& spec,
                     InputModality modality);

}  // namespace spikeleak
