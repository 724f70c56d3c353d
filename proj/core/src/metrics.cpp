#include "spikeleak/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "spikeleak/errors.hpp"

namespace spikeleak {

namespace {

void check_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " differ");
  }
}

constexpr std::size_t kWin = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWin> gaussian_window() {
  std::array<double, kWin> w{};
  double s = 0.0;
  for (std::size_t i = 0; i < kWin; ++i) {
    const double d = static_cast<double>(i) - 5.0;
    w[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    s += w[i];
  }
  for (auto& v : w) v /= s;
  return w;
}

double ssim_formula(double ma, double mb, double va, double vb, double cov) {
  return ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
}

double global_ssim(const double* a, const double* b, std::size_t n) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double va = 0, vb = 0, cov = 0;
  for (std::size_t i = 0; i < n; ++i) {
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
    cov += (a[i] - ma) * (b[i] - mb);
  }
  const double nn = static_cast<double>(n);
  return ssim_formula(ma, mb, va / nn, vb / nn, cov / nn);
}

// Separable Gaussian filter over the valid region of an H x W plane.
std::vector<double> filter_valid(const std::vector<double>& p, std::size_t H, std::size_t W) {
  static const auto w = gaussian_window();
  const std::size_t Ho = H - kWin + 1, Wo = W - kWin + 1;
  std::vector<double> rows(H * Wo, 0.0), out(Ho * Wo, 0.0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < Wo; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWin; ++k) s += w[k] * p[y * W + x + k];
      rows[y * Wo + x] = s;
    }
  for (std::size_t y = 0; y < Ho; ++y)
    for (std::size_t x = 0; x < Wo; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWin; ++k) s += w[k] * rows[(y + k) * Wo + x];
      out[y * Wo + x] = s;
    }
  return out;
}

double local_ssim(const double* a, const double* b, std::size_t H, std::size_t W) {
  const std::size_t n = H * W;
  std::vector<double> pa(a, a + n), pb(b, b + n), aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto ma = filter_valid(pa, H, W), mb = filter_valid(pb, H, W);
  const auto saa = filter_valid(aa, H, W), sbb = filter_valid(bb, H, W), sab = filter_valid(ab, H, W);
  double total = 0.0;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    total += ssim_formula(ma[i], mb[i], saa[i] - ma[i] * ma[i], sbb[i] - mb[i] * mb[i], sab[i] - ma[i] * mb[i]);
  }
  return total / static_cast<double>(ma.size());
}

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
  check_same(a, b, "mse");
  const auto da = a.data(), db = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) s += (da[i] - db[i]) * (da[i] - db[i]);
  return s / static_cast<double>(da.size());
}

double psnr_from_mse(double mse_value, double peak) {
  if (mse_value <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse_value);
}

double psnr(const Tensor& a, const Tensor& b, double peak) { return psnr_from_mse(mse(a, b), peak); }

double ssim(const Tensor& a, const Tensor& b) {
  check_same(a, b, "ssim");
  if (a.rank() < 2) throw DimensionError("ssim needs at least [H,W]");
  const std::size_t H = a.dim(a.rank() - 2), W = a.dim(a.rank() - 1);
  const std::size_t planes = a.numel() / (H * W);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double total = 0.0;
  for (std::size_t p = 0; p < planes; ++p) {
    const double* x = pa + p * H * W;
    const double* y = pb + p * H * W;
    total += (H < kWin || W < kWin) ? global_ssim(x, y, H * W) : local_ssim(x, y, H, W);
  }
  return total / static_cast<double>(planes);
}

double l2_distance(const Tensor& a, const Tensor& b) {
  check_same(a, b, "l2_distance");
  const auto da = a.data(), db = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) s += (da[i] - db[i]) * (da[i] - db[i]);
  return std::sqrt(s);
}

Aggregate aggregate(std::span<const double> values) {
  Aggregate g;
  g.count = values.size();
  if (values.empty()) return g;
  double s = 0.0;
  for (double v : values) s += v;
  g.mean = s / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - g.mean) * (v - g.mean);
  g.std = std::sqrt(ss / static_cast<double>(values.size()));
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  g.min = *lo;
  g.max = *hi;
  return g;
}

}  // namespace spikeleak
