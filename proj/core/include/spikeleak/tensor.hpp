#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spikeleak {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tape;

namespace detail {

inline constexpr std::size_t kNoNode = static_cast<std::size_t>(-1);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;
  // Producing node. Only set for tensors recorded on a tape.
  Tape* tape = nullptr;
  std::uint64_t tape_epoch = 0;
  std::size_t node = kNoNode;
};

}  // namespace detail

/// Dense row-major float64 tensor with an optional link into a computation tape.
///
/// Copies are shallow: two Tensor handles may refer to the same storage. Values are
/// treated as immutable once an op has produced them; only leaves may be overwritten
/// (via assign()) and only gradient buffers are ever accumulated into.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  static Tensor scalar(double value);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  double operator[](std::size_t i) const { return data()[i]; }
  double item() const;

  /// Overwrite a leaf's values in place (optimizer updates). Throws on non-leaves.
  void assign(std::span<const double> values);

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;

  const std::optional<std::vector<double>>& grad() const;
  void zero_grad();
  void accumulate_grad(std::span<const double> g);

  /// A fresh leaf with copied values and no graph history.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  // Engine hooks.
  const std::shared_ptr<detail::TensorImpl>& impl() const noexcept { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

bool bit_identical(const Tensor& a, const Tensor& b);

/// Ordered per-parameter gradient tensors (or any ordered tensor list that behaves like one).
struct GradientSet {
  std::vector<Tensor> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
  const Tensor& operator[](std::size_t i) const { return entries[i]; }

  std::size_t total_numel() const;
  std::vector<double> flatten() const;
  bool all_finite() const;
};

/// Vector-Jacobian rule of a recorded op: maps d(out) to d(input_i) per input.
/// Entries for inputs that do not require grad may be left undefined.
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

/// Wengert list of recorded operations. Nodes are appended in execution order, so the
/// index order is a topological order of the graph.
class Tape {
 public:
  struct Node {
    const char* name = "";
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }

  /// Drops every node. Tensors produced before the reset become plain constants.
  void reset();

  void record(const char* name, std::vector<Tensor> inputs, Tensor& output, BackwardFn fn);

  /// Node index of t on this tape, or nullopt when t was not produced here.
  std::optional<std::size_t> node_of(const Tensor& t) const;

  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<Node> nodes_;
  std::uint64_t epoch_ = 1;
};

/// Makes a tape the recording target for the current thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope();

 private:
  Tape* previous_;
};

/// Disables recording on the current thread for the scope's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  ~NoGradGuard();

 private:
  bool previous_;
};

bool grad_enabled();

namespace autograd {

struct GradOptions {
  /// Record the backward pass itself so the returned gradients can be differentiated again.
  bool create_graph = false;
};

/// Gradients of a scalar root w.r.t. each tensor in wrt. Does not touch .grad buffers.
/// Tensors the root does not depend on receive zeros.
std::vector<Tensor> grad(const Tensor& root, std::span<const Tensor> wrt, GradOptions options = {});
std::vector<Tensor> grad(const Tensor& root, std::initializer_list<Tensor> wrt,
                         GradOptions options = {});

/// Accumulates d(root)/d(leaf) into .grad of every reachable leaf that requires grad and
/// returns the gradients for params (in the given order; zeros for unreached params).
GradientSet backward(const Tensor& root, std::span<const Tensor> params);

}  // namespace autograd

}  // namespace spikeleak
