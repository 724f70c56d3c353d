#include <algorithm>

#include "op_support.hpp"
#include "spikeleak/errors.hpp"
#include "spikeleak/ops.hpp"

namespace spikeleak {

using detail::finish;
using detail::make;

namespace {

struct ConvGeometry {
  std::size_t B, C, H, W, F, K, Ho, Wo, stride, pad;
};

ConvGeometry geometry(const Shape& input, const Shape& weight, std::size_t stride, std::size_t padding) {
  if (input.size() != 4) throw DimensionError("conv2d input must be [B,C,H,W], got " + shape_to_string(input));
  if (weight.size() != 4) throw DimensionError("conv2d weight must be [F,C,k,k], got " + shape_to_string(weight));
  if (weight[2] != weight[3]) throw DimensionError("conv2d kernel must be square");
  if (input[1] != weight[1]) {
    throw DimensionError("conv2d channel mismatch: input " + shape_to_string(input) + " vs weight " +
                         shape_to_string(weight));
  }
  if (stride < 1) throw DimensionError("conv2d stride must be >= 1");
  const std::size_t k = weight[2];
  if (k > input[2] + 2 * padding || k > input[3] + 2 * padding) {
    throw DimensionError("conv2d kernel larger than padded input");
  }
  ConvGeometry g{};
  g.B = input[0];
  g.C = input[1];
  g.H = input[2];
  g.W = input[3];
  g.F = weight[0];
  g.K = k;
  g.stride = stride;
  g.pad = padding;
  g.Ho = (g.H + 2 * padding - k) / stride + 1;
  g.Wo = (g.W + 2 * padding - k) / stride + 1;
  return g;
}

// Output columns ow for which iw = ow*stride - pad + kw lands inside [0, W).
struct Span {
  std::size_t begin, end;
};

Span valid_range(std::size_t kw, std::size_t W, std::size_t Wo, std::size_t stride, std::size_t pad) {
  const long long s = static_cast<long long>(stride);
  const long long lo_num = static_cast<long long>(pad) - static_cast<long long>(kw);
  long long lo = lo_num <= 0 ? 0 : (lo_num + s - 1) / s;
  long long hi_num = static_cast<long long>(W) - 1 + static_cast<long long>(pad) - static_cast<long long>(kw);
  if (hi_num < 0) return {0, 0};
  long long hi = std::min<long long>(hi_num / s, static_cast<long long>(Wo) - 1);
  if (hi < lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi) + 1};
}

// Visits every (input offset, output offset) pair that shares a kernel tap. The callback
// receives base pointers for one row so the inner loop stays contiguous on the output side.
template <typename RowFn>
void for_each_tap(const ConvGeometry& g, RowFn&& row) {
  for (std::size_t b = 0; b < g.B; ++b)
    for (std::size_t f = 0; f < g.F; ++f)
      for (std::size_t c = 0; c < g.C; ++c)
        for (std::size_t kh = 0; kh < g.K; ++kh)
          for (std::size_t kw = 0; kw < g.K; ++kw) {
            const Span cols = valid_range(kw, g.W, g.Wo, g.stride, g.pad);
            if (cols.begin >= cols.end) continue;
            const std::size_t w_idx = ((f * g.C + c) * g.K + kh) * g.K + kw;
            for (std::size_t oh = 0; oh < g.Ho; ++oh) {
              const long long ih = static_cast<long long>(oh * g.stride + kh) - static_cast<long long>(g.pad);
              if (ih < 0 || ih >= static_cast<long long>(g.H)) continue;
              const std::size_t in_row = ((b * g.C + c) * g.H + static_cast<std::size_t>(ih)) * g.W;
              const std::size_t out_row = ((b * g.F + f) * g.Ho + oh) * g.Wo;
              // iw = ow*stride + kw - pad
              const std::size_t in_col0 = cols.begin * g.stride + kw - g.pad;
              row(in_row + in_col0, out_row + cols.begin, cols.end - cols.begin, w_idx);
            }
          }
}

}  // namespace

Tensor conv2d_nobias(const Tensor& input, const Tensor& weight, std::size_t stride, std::size_t padding) {
  const ConvGeometry g = geometry(input.shape(), weight.shape(), stride, padding);
  std::vector<double> out(g.B * g.F * g.Ho * g.Wo, 0.0);
  const double* x = input.data().data();
  const double* w = weight.data().data();
  double* y = out.data();
  const std::size_t s = g.stride;
  for_each_tap(g, [&](std::size_t in_off, std::size_t out_off, std::size_t n, std::size_t w_idx) {
    const double wv = w[w_idx];
    if (wv == 0.0) return;
    const double* src = x + in_off;
    double* dst = y + out_off;
    for (std::size_t i = 0; i < n; ++i) dst[i] += wv * src[i * s];
  });
  Tensor r = make(Shape{g.B, g.F, g.Ho, g.Wo}, std::move(out));
  const Shape in_shape = input.shape();
  const Shape w_shape = weight.shape();
  return finish("conv2d", r, {input, weight}, [input, weight, in_shape, w_shape, stride, padding](const Tensor& gy) {
    return std::vector<Tensor>{
        input.requires_grad() ? conv2d_input_grad(gy, weight, in_shape, stride, padding) : Tensor(),
        weight.requires_grad() ? conv2d_weight_grad(input, gy, w_shape, stride, padding) : Tensor()};
  });
}

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape,
                         std::size_t stride, std::size_t padding) {
  const ConvGeometry g = geometry(input_shape, weight.shape(), stride, padding);
  if (grad_out.shape() != Shape{g.B, g.F, g.Ho, g.Wo}) {
    throw DimensionError("conv2d_input_grad: grad_out shape " + shape_to_string(grad_out.shape()));
  }
  std::vector<double> out(shape_numel(input_shape), 0.0);
  const double* gy = grad_out.data().data();
  const double* w = weight.data().data();
  double* gx = out.data();
  const std::size_t s = g.stride;
  for_each_tap(g, [&](std::size_t in_off, std::size_t out_off, std::size_t n, std::size_t w_idx) {
    const double wv = w[w_idx];
    if (wv == 0.0) return;
    double* dst = gx + in_off;
    const double* src = gy + out_off;
    for (std::size_t i = 0; i < n; ++i) dst[i * s] += wv * src[i];
  });
  Tensor r = make(input_shape, std::move(out));
  const Shape w_shape = weight.shape();
  return finish("conv2d_input_grad", r, {grad_out, weight},
                [grad_out, weight, w_shape, stride, padding](const Tensor& gg) {
                  return std::vector<Tensor>{
                      grad_out.requires_grad() ? conv2d_nobias(gg, weight, stride, padding) : Tensor(),
                      weight.requires_grad() ? conv2d_weight_grad(gg, grad_out, w_shape, stride, padding)
                                             : Tensor()};
                });
}

Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_out, const Shape& weight_shape,
                          std::size_t stride, std::size_t padding) {
  const ConvGeometry g = geometry(input.shape(), weight_shape, stride, padding);
  if (grad_out.shape() != Shape{g.B, g.F, g.Ho, g.Wo}) {
    throw DimensionError("conv2d_weight_grad: grad_out shape " + shape_to_string(grad_out.shape()));
  }
  std::vector<double> out(shape_numel(weight_shape), 0.0);
  const double* x = input.data().data();
  const double* gy = grad_out.data().data();
  const std::size_t s = g.stride;
  for_each_tap(g, [&](std::size_t in_off, std::size_t out_off, std::size_t n, std::size_t w_idx) {
    const double* src = x + in_off;
    const double* gsrc = gy + out_off;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += src[i * s] * gsrc[i];
    out[w_idx] += acc;
  });
  Tensor r = make(weight_shape, std::move(out));
  const Shape in_shape = input.shape();
  return finish("conv2d_weight_grad", r, {input, grad_out},
                [input, grad_out, in_shape, stride, padding](const Tensor& gg) {
                  return std::vector<Tensor>{
                      input.requires_grad() ? conv2d_input_grad(grad_out, gg, in_shape, stride, padding)
                                            : Tensor(),
                      grad_out.requires_grad() ? conv2d_nobias(input, gg, stride, padding) : Tensor()};
                });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
    throw DimensionError("conv2d bias " + shape_to_string(bias.shape()) + " vs weight " +
                         shape_to_string(weight.shape()));
  }
  Tensor y = conv2d_nobias(input, weight, stride, padding);
  const std::size_t B = y.dim(0), HW = y.dim(2) * y.dim(3);
  // bias [F] -> [B,F] -> [B,F,HW] -> [B,F,Ho,Wo]
  Tensor b = reshape(broadcast_axis(broadcast_axis(bias, 0, B), 2, HW), y.shape());
  return add(y, b);
}

}  // namespace spikeleak
