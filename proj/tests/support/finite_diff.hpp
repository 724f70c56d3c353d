#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "spikeleak/tensor.hpp"

namespace spikeleak::testing {

// Central finite differences of a scalar function of several tensors. The function is
// evaluated with recording disabled, so this never touches the autodiff machinery.
inline std::vector<std::vector<double>> numeric_gradients(
    const std::function<double(const std::vector<Tensor>&)>& f, const std::vector<Tensor>& args,
    double h = 1e-5) {
  NoGradGuard no_grad;
  std::vector<std::vector<double>> grads;
  for (std::size_t a = 0; a < args.size(); ++a) {
    std::vector<double> base(args[a].data().begin(), args[a].data().end());
    std::vector<double> g(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      std::vector<Tensor> perturbed = args;
      std::vector<double> plus = base, minus = base;
      plus[i] += h;
      minus[i] -= h;
      perturbed[a] = Tensor(args[a].shape(), plus);
      const double fp = f(perturbed);
      perturbed[a] = Tensor(args[a].shape(), minus);
      const double fm = f(perturbed);
      g[i] = (fp - fm) / (2 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// max |a-b| / max(max|b|, floor): relative to the gradient's overall scale so that
// near-zero entries do not dominate.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b,
                             double floor = 1e-8) {
  double num = 0.0, den = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return num / den;
}

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(shape, std::move(v));
}

inline std::vector<double> to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace spikeleak::testing
