#pragma once

#include <cstddef>

#include "spikeleak/tensor.hpp"

// Differentiable primitives. Every backward rule is itself written in terms of these ops,
// so gradients computed with create_graph=true can be differentiated a second time.
// Broadcasting is never implicit: use broadcast_axis() where a bias or row value has to
// be spread over a dimension.
namespace spikeleak {

// Elementwise, operands of identical shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
/// 1 - a
Tensor one_minus(const Tensor& a);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor reciprocal(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor relu(const Tensor& a);

/// Heaviside step (ties fire: v >= 0 maps to 1) with an arctan surrogate derivative
/// alpha / (2 (1 + (pi/2 alpha v)^2)) in the backward pass.
Tensor spike_heaviside_atan(const Tensor& v, double alpha);
/// The surrogate derivative itself, as a differentiable op.
Tensor atan_surrogate_grad(const Tensor& v, double alpha);

Tensor reshape(const Tensor& a, Shape shape);
/// [N, d1, d2, ...] -> [N, d1*d2*...]
Tensor flatten(const Tensor& a);

/// Sum of all entries, shape [1].
Tensor sum(const Tensor& a);
Tensor sum_axis(const Tensor& a, std::size_t axis);
Tensor mean_axis(const Tensor& a, std::size_t axis);
/// Inserts a new axis of length n at position axis, copying values along it.
Tensor broadcast_axis(const Tensor& a, std::size_t axis, std::size_t n);
/// Copies a scalar into every cell of the given shape.
Tensor expand_scalar(const Tensor& s, const Shape& shape);

/// Slice index along the leading axis (the leading axis is dropped).
Tensor select_leading(const Tensor& a, std::size_t index);
/// Adjoint of select_leading: places a into slot index of a zero tensor with n leading slots.
Tensor embed_leading(const Tensor& a, std::size_t index, std::size_t n);

Tensor transpose(const Tensor& a);
/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// input [B,D], weight [K,D], bias [K] -> [B,K]
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// input [B,C,H,W], weight [F,C,k,k] -> [B,F,H',W'] without bias.
Tensor conv2d_nobias(const Tensor& input, const Tensor& weight, std::size_t stride, std::size_t padding);
/// Gradient of conv2d_nobias w.r.t. its input, given d(out).
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape,
                         std::size_t stride, std::size_t padding);
/// Gradient of conv2d_nobias w.r.t. its weight, given the input and d(out).
Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_out, const Shape& weight_shape,
                          std::size_t stride, std::size_t padding);
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

/// 2x2 average pooling with stride 2 on [B,C,H,W]; H and W must be even.
Tensor avg_pool2x2(const Tensor& a);
/// Adjoint of avg_pool2x2: nearest 2x upsampling scaled by 1/4.
Tensor avg_unpool2x2(const Tensor& a);

/// Row-wise log(sum(exp(x))) of [B,K] -> [B], stabilized by max subtraction.
Tensor logsumexp_rows(const Tensor& a);
Tensor log_softmax(const Tensor& logits);
Tensor softmax(const Tensor& logits);
/// Mean over the batch of -sum_k target_k log softmax(logits)_k. target may be one-hot or
/// any distribution, and may itself carry a graph (soft labels).
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& target);

/// sum((a - b)^2), shape [1].
Tensor squared_difference_sum(const Tensor& a, const Tensor& b);

Tensor one_hot(std::size_t label, std::size_t num_classes);

}  // namespace spikeleak
