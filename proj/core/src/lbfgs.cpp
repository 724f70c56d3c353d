#include "spikeleak/lbfgs.hpp"

#include <cmath>
#include <numeric>

#include "spikeleak/errors.hpp"

namespace spikeleak {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

void LbfgsConfig::validate() const {
  if (history < 1) throw ValidationError("lbfgs history must be >= 1");
  if (!(lr > 0.0)) throw ValidationError("lbfgs learning rate must be > 0");
  if (max_line_search < 1) throw ValidationError("lbfgs line search needs at least one trial");
  if (!(c1 > 0.0 && c1 < 1.0)) throw ValidationError("lbfgs c1 must lie in (0,1)");
}

LbfgsState lbfgs_init(const Objective& f, std::vector<double> x0, const Projection& project) {
  LbfgsState st;
  st.x = std::move(x0);
  if (project) project(st.x);
  st.f = f(st.x, st.g);
  st.evaluations = 1;
  return st;
}

StepOutcome lbfgs_step(const Objective& f, LbfgsState& st, const LbfgsConfig& cfg, const Projection& project) {
  const std::size_t n = st.x.size();
  if (!std::isfinite(st.f)) return StepOutcome::diverged;

  // Two-loop recursion.
  std::vector<double> q = st.g;
  const std::size_t m = st.s.size();
  std::vector<double> alpha(m), rho(m);
  for (std::size_t k = m; k-- > 0;) {
    rho[k] = 1.0 / dot(st.y[k], st.s[k]);
    alpha[k] = rho[k] * dot(st.s[k], q);
    for (std::size_t i = 0; i < n; ++i) q[i] -= alpha[k] * st.y[k][i];
  }
  if (m > 0) {
    const double gamma = dot(st.s.back(), st.y.back()) / dot(st.y.back(), st.y.back());
    for (auto& v : q) v *= gamma;
  }
  for (std::size_t k = 0; k < m; ++k) {
    const double beta = rho[k] * dot(st.y[k], q);
    for (std::size_t i = 0; i < n; ++i) q[i] += (alpha[k] - beta) * st.s[k][i];
  }
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = -q[i];
  if (!(dot(st.g, d) < 0.0)) {
    for (std::size_t i = 0; i < n; ++i) d[i] = -st.g[i];
    st.reset_history();
  }

  double t = cfg.lr;
  if (st.history_empty()) {
    double g1 = 0.0;
    for (double v : st.g) g1 += std::abs(v);
    if (g1 > 0.0) t = cfg.lr * std::min(1.0, 1.0 / g1);
  }

  std::vector<double> xn(n), gn;
  bool saw_nonfinite = false;
  for (std::size_t trial = 0; trial < cfg.max_line_search; ++trial, t *= 0.5) {
    for (std::size_t i = 0; i < n; ++i) xn[i] = st.x[i] + t * d[i];
    if (project) project(xn);
    const double fn = f(xn, gn);
    ++st.evaluations;
    if (!std::isfinite(fn)) {
      saw_nonfinite = true;
      continue;
    }
    double slope = 0.0;
    for (std::size_t i = 0; i < n; ++i) slope += st.g[i] * (xn[i] - st.x[i]);
    if (fn <= st.f + cfg.c1 * std::min(0.0, slope)) {
      std::vector<double> s(n), y(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = xn[i] - st.x[i];
        y[i] = gn[i] - st.g[i];
      }
      if (dot(s, y) > cfg.curvature_eps) {
        st.s.push_back(std::move(s));
        st.y.push_back(std::move(y));
        if (st.s.size() > cfg.history) {
          st.s.pop_front();
          st.y.pop_front();
        }
      }
      st.x.swap(xn);
      st.g.swap(gn);
      st.f = fn;
      return StepOutcome::accepted;
    }
  }
  return saw_nonfinite ? StepOutcome::diverged : StepOutcome::stalled;
}

}  // namespace spikeleak
