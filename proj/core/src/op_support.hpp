#pragma once

#include <vector>

#include "spikeleak/tensor.hpp"

namespace spikeleak::detail {

inline Tensor make(Shape shape, std::vector<double> values) {
  return Tensor(std::move(shape), std::move(values));
}

/// Records out on the active tape when recording is on and any input requires grad.
template <typename Fn>
Tensor finish(const char* name, Tensor& out, std::vector<Tensor> inputs, Fn&& fn) {
  Tape* tape = Tape::active();
  if (!tape || !grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  tape->record(name, std::move(inputs), out, BackwardFn(std::forward<Fn>(fn)));
  return out;
}

}  // namespace spikeleak::detail
