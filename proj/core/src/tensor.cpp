#include "spikeleak/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "spikeleak/errors.hpp"

namespace spikeleak {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0); }

Tensor Tensor::full(const Shape& shape, double value) {
  return Tensor(shape, std::vector<double>(shape_numel(shape), value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, {value}); }

namespace {
const detail::TensorImpl& checked(const std::shared_ptr<detail::TensorImpl>& impl) {
  if (!impl) throw UsageError("use of an undefined tensor");
  return *impl;
}
}  // namespace

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(impl_).data.size(); }

std::span<const double> Tensor::data() const { return checked(impl_).data; }

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on a tensor of shape " + shape_to_string(shape()));
  return impl_->data[0];
}

void Tensor::assign(std::span<const double> values) {
  checked(impl_);
  if (!is_leaf()) throw UsageError("assign() is only allowed on leaf tensors");
  if (values.size() != impl_->data.size()) {
    throw DimensionError("assign() with " + std::to_string(values.size()) + " values into " +
                         shape_to_string(impl_->shape));
  }
  std::copy(values.begin(), values.end(), impl_->data.begin());
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  checked(impl_);
  if (!is_leaf()) throw UsageError("requires_grad can only be toggled on leaves");
  impl_->requires_grad = flag;
  if (!flag) impl_->grad.reset();
  return *this;
}

bool Tensor::is_leaf() const { return checked(impl_).node == detail::kNoNode; }

const std::optional<std::vector<double>>& Tensor::grad() const { return checked(impl_).grad; }

void Tensor::zero_grad() {
  checked(impl_);
  if (impl_->requires_grad) impl_->grad.emplace(impl_->data.size(), 0.0);
}

void Tensor::accumulate_grad(std::span<const double> g) {
  checked(impl_);
  if (!impl_->requires_grad) return;
  if (g.size() != impl_->data.size()) throw DimensionError("gradient size mismatch");
  if (!impl_->grad) impl_->grad.emplace(impl_->data.size(), 0.0);
  auto& buf = *impl_->grad;
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

Tensor Tensor::detach() const {
  const auto& impl = checked(impl_);
  return Tensor(impl.shape, impl.data);
}

bool bit_identical(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto x = a.data();
  auto y = b.data();
  return std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

std::size_t GradientSet::total_numel() const {
  std::size_t n = 0;
  for (const auto& t : entries) n += t.numel();
  return n;
}

std::vector<double> GradientSet::flatten() const {
  std::vector<double> out;
  out.reserve(total_numel());
  for (const auto& t : entries) {
    auto d = t.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

bool GradientSet::all_finite() const {
  for (const auto& t : entries) {
    for (double v : t.data()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

}  // namespace spikeleak
