#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

namespace spikeleak {

struct LbfgsConfig {
  std::size_t history = 100;
  double lr = 1.0;
  std::size_t max_line_search = 25;
  double c1 = 1e-4;
  /// Curvature pairs with s.y at or below this are skipped.
  double curvature_eps = 1e-10;

  void validate() const;
};

/// f(x) with its gradient written into grad (resized by the callee as needed).
using Objective = std::function<double(std::span<const double> x, std::vector<double>& grad)>;
/// In-place projection onto the feasible set, applied to every trial point.
using Projection = std::function<void(std::vector<double>& x)>;

struct LbfgsState {
  std::vector<double> x;
  std::vector<double> g;
  double f = 0.0;
  std::deque<std::vector<double>> s;
  std::deque<std::vector<double>> y;
  std::size_t evaluations = 0;

  bool history_empty() const noexcept { return s.empty(); }
  void reset_history() {
    s.clear();
    y.clear();
  }
};

enum class StepOutcome {
  accepted,
  /// No trial point satisfied sufficient decrease; the iterate is unchanged.
  stalled,
  /// Every rejected trial produced a non-finite objective.
  diverged,
};

/// Evaluates the objective at the projected x0.
LbfgsState lbfgs_init(const Objective& f, std::vector<double> x0, const Projection& project = {});

/// Two-loop recursion direction, then backtracking (halving) from the initial step until
/// f(x_new) <= f(x) + c1 * min(0, g.(x_new - x)). The first step after an empty history
/// uses lr * min(1, 1/|g|_1). A non-descent direction falls back to -g and clears the
/// history.
StepOutcome lbfgs_step(const Objective& f, LbfgsState& state, const LbfgsConfig& cfg, const Projection& project = {});

}  // namespace spikeleak
