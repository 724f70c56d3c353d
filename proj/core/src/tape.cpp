#include <unordered_map>

#include "spikeleak/errors.hpp"
#include "spikeleak/ops.hpp"
#include "spikeleak/tensor.hpp"

namespace spikeleak {

namespace {
thread_local Tape* g_active_tape = nullptr;
thread_local bool g_grad_enabled = true;
}  // namespace

Tape::~Tape() { reset(); }

void Tape::reset() {
  for (auto& node : nodes_) {
    if (node.output.defined()) {
      auto& impl = *node.output.impl();
      impl.tape = nullptr;
      impl.node = detail::kNoNode;
      impl.requires_grad = false;
    }
  }
  nodes_.clear();
  ++epoch_;
}

void Tape::record(const char* name, std::vector<Tensor> inputs, Tensor& output, BackwardFn fn) {
  auto& impl = *output.impl();
  impl.requires_grad = true;
  impl.tape = this;
  impl.tape_epoch = epoch_;
  impl.node = nodes_.size();
  nodes_.push_back(Node{name, std::move(inputs), output, std::move(fn)});
}

std::optional<std::size_t> Tape::node_of(const Tensor& t) const {
  if (!t.defined()) return std::nullopt;
  const auto& impl = *t.impl();
  if (impl.tape != this || impl.tape_epoch != epoch_ || impl.node == detail::kNoNode) {
    return std::nullopt;
  }
  return impl.node;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

namespace autograd {
namespace {

class GradModeScope {
 public:
  explicit GradModeScope(bool enabled) : previous_(g_grad_enabled) { g_grad_enabled = enabled; }
  ~GradModeScope() { g_grad_enabled = previous_; }

 private:
  bool previous_;
};

struct BackwardResult {
  std::vector<Tensor> node_grads;
  std::unordered_map<const detail::TensorImpl*, Tensor> leaf_grads;
  std::vector<Tensor> leaves;  // insertion order, for deterministic accumulation
};

void accumulate(Tensor& slot, const Tensor& g) { slot = slot.defined() ? add(slot, g) : g; }

BackwardResult run_backward(const Tensor& root, bool create_graph) {
  if (!root.defined()) throw UsageError("backward on an undefined tensor");
  if (root.numel() != 1) {
    throw UsageError("backward root must be scalar, got shape " + shape_to_string(root.shape()));
  }
  BackwardResult result;
  Tape* tape = root.impl()->tape;
  std::optional<std::size_t> root_node = tape ? tape->node_of(root) : std::nullopt;

  if (!root_node) {
    if (root.requires_grad() && root.is_leaf()) {
      Tensor one = Tensor::full(root.shape(), 1.0);
      result.leaf_grads.emplace(root.impl().get(), one);
      result.leaves.push_back(root);
      return result;
    }
    throw UsageError("backward root is not on an active tape");
  }

  TapeScope scope(*tape);
  GradModeScope mode(create_graph);

  result.node_grads.resize(*root_node + 1);
  result.node_grads[*root_node] = Tensor::full(root.shape(), 1.0);

  for (std::size_t i = *root_node + 1; i-- > 0;) {
    Tensor g = result.node_grads[i];
    if (!g.defined()) continue;
    // Copy out what we need: recording during create_graph may grow the node vector.
    const Tape::Node& node = tape->node(i);
    BackwardFn fn = node.backward;
    std::vector<Tensor> inputs = node.inputs;
    std::vector<Tensor> input_grads = fn(g);
    if (!create_graph) result.node_grads[i] = Tensor();

    for (std::size_t k = 0; k < inputs.size() && k < input_grads.size(); ++k) {
      const Tensor& in = inputs[k];
      const Tensor& gin = input_grads[k];
      if (!gin.defined() || !in.defined() || !in.requires_grad()) continue;
      if (gin.shape() != in.shape()) {
        throw DimensionError(std::string("backward rule of ") + node.name + " produced " +
                             shape_to_string(gin.shape()) + " for input " +
                             shape_to_string(in.shape()));
      }
      if (auto j = tape->node_of(in); j && *j < i) {
        accumulate(result.node_grads[*j], gin);
      } else {
        auto [it, inserted] = result.leaf_grads.try_emplace(in.impl().get(), Tensor());
        if (inserted) result.leaves.push_back(in);
        accumulate(it->second, gin);
      }
    }
  }
  return result;
}

Tensor lookup(const BackwardResult& r, const Tensor& t, const Tensor& root) {
  if (auto it = r.leaf_grads.find(t.impl().get()); it != r.leaf_grads.end()) return it->second;
  Tape* tape = root.impl()->tape;
  if (tape) {
    if (auto j = tape->node_of(t); j && *j < r.node_grads.size() && r.node_grads[*j].defined()) {
      return r.node_grads[*j];
    }
  }
  return Tensor::zeros(t.shape());
}

}  // namespace

std::vector<Tensor> grad(const Tensor& root, std::span<const Tensor> wrt, GradOptions options) {
  BackwardResult r = run_backward(root, options.create_graph);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const auto& t : wrt) {
    Tensor g = lookup(r, t, root);
    out.push_back(options.create_graph ? g : g.detach());
  }
  return out;
}

std::vector<Tensor> grad(const Tensor& root, std::initializer_list<Tensor> wrt, GradOptions options) {
  return grad(root, std::span<const Tensor>(wrt.begin(), wrt.size()), options);
}

GradientSet backward(const Tensor& root, std::span<const Tensor> params) {
  BackwardResult r = run_backward(root, false);
  for (auto& leaf : r.leaves) {
    if (leaf.is_leaf()) leaf.accumulate_grad(r.leaf_grads.at(leaf.impl().get()).data());
  }
  GradientSet out;
  out.entries.reserve(params.size());
  for (const auto& p : params) out.entries.push_back(lookup(r, p, root).detach());
  return out;
}

}  // namespace autograd
}  // namespace spikeleak
