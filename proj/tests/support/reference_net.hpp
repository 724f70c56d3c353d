#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <tuple>
#include <vector>

#include "spikeleak/model.hpp"

// Plain-loop re-implementation of the model forward passes, sharing no code with the
// library. Used as an oracle: its outputs are compared with the library, and finite
// differences of it stand in for analytic gradients.
namespace spikeleak::testing {

using Vec = std::vector<double>;

inline Vec ref_conv(const Vec& x, std::size_t B, std::size_t C, std::size_t H, std::size_t W, const Vec& w,
                    const Vec& bias, std::size_t F, std::size_t k, std::size_t stride, std::size_t pad,
                    std::size_t& Ho, std::size_t& Wo) {
  Ho = (H + 2 * pad - k) / stride + 1;
  Wo = (W + 2 * pad - k) / stride + 1;
  Vec y(B * F * Ho * Wo, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          double acc = bias[f];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const long ih = static_cast<long>(oh * stride + i) - static_cast<long>(pad);
                const long iw = static_cast<long>(ow * stride + j) - static_cast<long>(pad);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W)) continue;
                acc += w[((f * C + c) * k + i) * k + j] * x[((b * C + c) * H + ih) * W + iw];
              }
          y[((b * F + f) * Ho + oh) * Wo + ow] = acc;
        }
  return y;
}

inline Vec ref_linear(const Vec& x, std::size_t B, std::size_t D, const Vec& w, const Vec& bias, std::size_t K) {
  Vec y(B * K);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < K; ++o) {
      double acc = bias[o];
      for (std::size_t d = 0; d < D; ++d) acc += x[b * D + d] * w[o * D + d];
      y[b * K + o] = acc;
    }
  return y;
}

/// Conv stack + classifier. act(layer, step, index, preactivation) produces each hidden
/// value; for the SNN variant the preactivation is V - v_th after integration.
struct RefNet {
  ModelSpec spec;
  std::vector<Vec> p;  // same order as ParameterSet

  explicit RefNet(const ModelSpec& s, const ParameterSet& params) : spec(s) {
    for (const auto& t : params.tensors) p.emplace_back(t.data().begin(), t.data().end());
  }

  Vec ann(const Vec& x, std::size_t B) const {
    Vec h = x;
    std::size_t C = spec.in_channels, H = spec.height, W = spec.width;
    for (std::size_t l = 0; l < spec.convs.size(); ++l) {
      const auto& c = spec.convs[l];
      std::size_t Ho, Wo;
      h = ref_conv(h, B, C, H, W, p[2 * l], p[2 * l + 1], c.out_channels, c.kernel, c.stride, c.padding, Ho, Wo);
      for (auto& v : h) v = spec.activation == Activation::relu ? std::max(v, 0.0) : 1.0 / (1.0 + std::exp(-v));
      C = c.out_channels;
      H = Ho;
      W = Wo;
    }
    const std::size_t L = spec.convs.size();
    return ref_linear(h, B, C * H * W, p[2 * L], p[2 * L + 1], spec.num_classes);
  }

  using SpikeFn = std::function<double(std::size_t layer, std::size_t t, std::size_t idx, double v)>;

  /// x holds T frames of [B,C,H,W] (or one frame when static).
  Vec snn(const Vec& x, std::size_t B, bool is_static, const SpikeFn& spike) const {
    const std::size_t T = spec.timesteps, L = spec.convs.size();
    const std::size_t frame = B * spec.in_channels * spec.height * spec.width;
    std::vector<Vec> V(L);
    Vec out(B * spec.num_classes, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      Vec h(x.begin() + (is_static ? 0 : t * frame), x.begin() + (is_static ? 0 : t * frame) + frame);
      std::size_t C = spec.in_channels, H = spec.height, W = spec.width;
      for (std::size_t l = 0; l < L; ++l) {
        const auto& c = spec.convs[l];
        std::size_t Ho, Wo;
        Vec I = ref_conv(h, B, C, H, W, p[2 * l], p[2 * l + 1], c.out_channels, c.kernel, c.stride, c.padding, Ho, Wo);
        if (V[l].empty()) V[l].assign(I.size(), 0.0);
        h.assign(I.size(), 0.0);
        for (std::size_t i = 0; i < I.size(); ++i) {
          const double v = V[l][i] + I[i];
          const double s = spike(l, t, i, v - spec.neuron.v_threshold);
          h[i] = s;
          V[l][i] = spec.neuron.reset_mode == ResetMode::hard_zero ? v * (1.0 - s) : v - s * spec.neuron.v_threshold;
        }
        C = c.out_channels;
        H = Ho;
        W = Wo;
      }
      const Vec y = ref_linear(h, B, C * H * W, p[2 * L], p[2 * L + 1], spec.num_classes);
      for (std::size_t i = 0; i < y.size(); ++i) out[i] += y[i] / static_cast<double>(T);
    }
    return out;
  }
};

inline double arctan_primitive(double v, double alpha) {
  return std::atan(std::numbers::pi / 2.0 * alpha * v) / std::numbers::pi + 0.5;
}

/// Records the membrane values of an unperturbed run, then evaluates the smooth twin in
/// which each spike is H(v0) + sigma(v) - sigma(v0). The twin agrees with the SNN at the
/// recorded point and its exact derivative is the surrogate gradient there.
struct SurrogateTwin {
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, double> v0;
  double alpha;

  RefNet::SpikeFn recorder() {
    return [this](std::size_t l, std::size_t t, std::size_t i, double v) {
      v0[{l, t, i}] = v;
      return v >= 0.0 ? 1.0 : 0.0;
    };
  }
  RefNet::SpikeFn twin() const {
    return [this](std::size_t l, std::size_t t, std::size_t i, double v) {
      const double base = v0.at({l, t, i});
      return (base >= 0.0 ? 1.0 : 0.0) + arctan_primitive(v, alpha) - arctan_primitive(base, alpha);
    };
  }
};

/// Cross entropy of one row of logits against a distribution.
inline double ref_cross_entropy(const Vec& logits, std::size_t B, std::size_t K, const Vec& target) {
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    double m = logits[b * K];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, logits[b * K + k]);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(logits[b * K + k] - m);
    const double lse = m + std::log(s);
    for (std::size_t k = 0; k < K; ++k) total -= target[b * K + k] * (logits[b * K + k] - lse);
  }
  return total / static_cast<double>(B);
}

}  // namespace spikeleak::testing
