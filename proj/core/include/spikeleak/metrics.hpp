#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "spikeleak/tensor.hpp"

namespace spikeleak {

double mse(const Tensor& a, const Tensor& b);
/// 10 log10(peak^2 / mse); +infinity for identical inputs.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
double psnr_from_mse(double mse_value, double peak = 1.0);

/// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5, K1 0.01, K2 0.03, dynamic
/// range 1), evaluated at every position where the window fits and averaged over all
/// leading (batch/channel) planes. Planes smaller than the window fall back to SSIM of
/// the global plane statistics.
double ssim(const Tensor& a, const Tensor& b);

/// Euclidean norm of a - b over all entries.
double l2_distance(const Tensor& a, const Tensor& b);

struct Aggregate {
  double mean = std::numeric_limits<double>::quiet_NaN();
  /// Population standard deviation.
  double std = std::numeric_limits<double>::quiet_NaN();
  double min = std::numeric_limits<double>::quiet_NaN();
  double max = std::numeric_limits<double>::quiet_NaN();
  std::size_t count = 0;
};

Aggregate aggregate(std::span<const double> values);

}  // namespace spikeleak
