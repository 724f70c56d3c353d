#include "spikeleak/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "op_support.hpp"
#include "spikeleak/errors.hpp"

namespace spikeleak {

using detail::finish;
using detail::make;

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

template <typename F>
std::vector<double> map_unary(const Tensor& a, F f) {
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

template <typename F>
std::vector<double> map_binary(const Tensor& a, const Tensor& b, F f) {
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// (outer, n, inner) decomposition around an axis.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_to_string(a.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out = make(a.shape(), map_binary(a, b, [](double x, double y) { return x + y; }));
  return finish("add", out, {a, b}, [](const Tensor& g) { return std::vector<Tensor>{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out = make(a.shape(), map_binary(a, b, [](double x, double y) { return x - y; }));
  return finish("sub", out, {a, b}, [](const Tensor& g) { return std::vector<Tensor>{g, neg(g)}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out = make(a.shape(), map_binary(a, b, [](double x, double y) { return x * y; }));
  return finish("mul", out, {a, b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{a.requires_grad() ? mul(g, b) : Tensor(),
                               b.requires_grad() ? mul(g, a) : Tensor()};
  });
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = make(a.shape(), map_unary(a, [s](double x) { return x * s; }));
  return finish("scale", out, {a}, [s](const Tensor& g) { return std::vector<Tensor>{scale(g, s)}; });
}

Tensor add_scalar(const Tensor& a, double s) {
  Tensor out = make(a.shape(), map_unary(a, [s](double x) { return x + s; }));
  return finish("add_scalar", out, {a}, [](const Tensor& g) { return std::vector<Tensor>{g}; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor one_minus(const Tensor& a) {
  Tensor out = make(a.shape(), map_unary(a, [](double x) { return 1.0 - x; }));
  return finish("one_minus", out, {a}, [](const Tensor& g) { return std::vector<Tensor>{neg(g)}; });
}

Tensor exp(const Tensor& a) {
  Tensor out = make(a.shape(), map_unary(a, [](double x) { return std::exp(x); }));
  return finish("exp", out, {a}, [out](const Tensor& g) { return std::vector<Tensor>{mul(g, out)}; });
}

Tensor log(const Tensor& a) {
  Tensor out = make(a.shape(), map_unary(a, [](double x) { return std::log(x); }));
  return finish("log", out, {a},
                [a](const Tensor& g) { return std::vector<Tensor>{mul(g, reciprocal(a))}; });
}

Tensor reciprocal(const Tensor& a) {
  Tensor out = make(a.shape(), map_unary(a, [](double x) { return 1.0 / x; }));
  return finish("reciprocal", out, {a},
                [out](const Tensor& g) { return std::vector<Tensor>{neg(mul(g, mul(out, out)))}; });
}

Tensor sigmoid(const Tensor& a) {
  Tensor out = make(a.shape(), map_unary(a, stable_sigmoid));
  return finish("sigmoid", out, {a}, [out](const Tensor& g) {
    return std::vector<Tensor>{mul(g, mul(out, one_minus(out)))};
  });
}

Tensor tanh(const Tensor& a) {
  Tensor out = make(a.shape(), map_unary(a, [](double x) { return std::tanh(x); }));
  return finish("tanh", out, {a}, [out](const Tensor& g) {
    return std::vector<Tensor>{mul(g, one_minus(mul(out, out)))};
  });
}

Tensor softplus(const Tensor& a) {
  Tensor out = make(a.shape(), map_unary(a, [](double x) {
                      return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
                    }));
  return finish("softplus", out, {a},
                [a](const Tensor& g) { return std::vector<Tensor>{mul(g, sigmoid(a))}; });
}

Tensor relu(const Tensor& a) {
  Tensor out = make(a.shape(), map_unary(a, [](double x) { return x > 0.0 ? x : 0.0; }));
  return finish("relu", out, {a}, [a](const Tensor& g) {
    Tensor mask = make(a.shape(), map_unary(a, [](double x) { return x > 0.0 ? 1.0 : 0.0; }));
    return std::vector<Tensor>{mul(g, mask)};
  });
}

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

// d/dv of the surrogate derivative. Recorded as a constant, so derivatives beyond the
// second order through the spike function are zero.
Tensor atan_surrogate_curvature(const Tensor& v, double alpha) {
  return make(v.shape(), map_unary(v, [alpha](double x) {
                const double u = kHalfPi * alpha * x;
                const double d = 1.0 + u * u;
                return -kHalfPi * alpha * alpha * u / (d * d);
              }));
}

}  // namespace

Tensor spike_heaviside_atan(const Tensor& v, double alpha) {
  if (!(alpha > 0)) throw ValidationError("surrogate alpha must be positive");
  Tensor out = make(v.shape(), map_unary(v, [](double x) { return x >= 0.0 ? 1.0 : 0.0; }));
  return finish("spike_heaviside_atan", out, {v}, [v, alpha](const Tensor& g) {
    return std::vector<Tensor>{mul(g, atan_surrogate_grad(v, alpha))};
  });
}

Tensor atan_surrogate_grad(const Tensor& v, double alpha) {
  if (!(alpha > 0)) throw ValidationError("surrogate alpha must be positive");
  Tensor out = make(v.shape(), map_unary(v, [alpha](double x) {
                      const double u = kHalfPi * alpha * x;
                      return alpha / (2.0 * (1.0 + u * u));
                    }));
  return finish("atan_surrogate_grad", out, {v}, [v, alpha](const Tensor& g) {
    return std::vector<Tensor>{mul(g, atan_surrogate_curvature(v, alpha))};
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape " + shape_to_string(a.shape()) + " -> " + shape_to_string(shape));
  }
  Tensor out = make(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  Shape original = a.shape();
  return finish("reshape", out, {a}, [original](const Tensor& g) {
    return std::vector<Tensor>{reshape(g, original)};
  });
}

Tensor flatten(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("flatten needs rank >= 2");
  return reshape(a, Shape{a.dim(0), a.numel() / a.dim(0)});
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor out = make(Shape{1}, {s});
  Shape original = a.shape();
  return finish("sum", out, {a}, [original](const Tensor& g) {
    return std::vector<Tensor>{expand_scalar(g, original)};
  });
}

Tensor expand_scalar(const Tensor& s, const Shape& shape) {
  if (s.numel() != 1) throw DimensionError("expand_scalar needs a single-element tensor");
  Tensor out = make(shape, std::vector<double>(shape_numel(shape), s.data()[0]));
  return finish("expand_scalar", out, {s}, [](const Tensor& g) { return std::vector<Tensor>{sum(g)}; });
}

Tensor sum_axis(const Tensor& a, std::size_t axis) {
  if (a.rank() < 2) throw DimensionError("sum_axis needs rank >= 2; use sum()");
  if (axis >= a.rank()) throw DimensionError("sum_axis: axis out of range");
  const AxisSplit sp = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  auto x = a.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t j = 0; j < sp.n; ++j) {
      const double* src = x.data() + (o * sp.n + j) * sp.inner;
      double* dst = out.data() + o * sp.inner;
      for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  }
  Tensor r = make(std::move(out_shape), std::move(out));
  const std::size_t n = sp.n;
  return finish("sum_axis", r, {a}, [axis, n](const Tensor& g) {
    return std::vector<Tensor>{broadcast_axis(g, axis, n)};
  });
}

Tensor mean_axis(const Tensor& a, std::size_t axis) {
  return scale(sum_axis(a, axis), 1.0 / static_cast<double>(a.dim(axis)));
}

Tensor broadcast_axis(const Tensor& a, std::size_t axis, std::size_t n) {
  if (axis > a.rank()) throw DimensionError("broadcast_axis: axis out of range");
  if (n == 0) throw DimensionError("broadcast_axis: n must be positive");
  Shape out_shape = a.shape();
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), n);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (std::size_t i = axis; i < a.rank(); ++i) inner *= a.shape()[i];
  std::vector<double> out(outer * n * inner);
  auto x = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < n; ++j) {
      std::copy_n(x.data() + o * inner, inner, out.data() + (o * n + j) * inner);
    }
  }
  Tensor r = make(std::move(out_shape), std::move(out));
  return finish("broadcast_axis", r, {a},
                [axis](const Tensor& g) { return std::vector<Tensor>{sum_axis(g, axis)}; });
}

Tensor select_leading(const Tensor& a, std::size_t index) {
  if (a.rank() < 2) throw DimensionError("select_leading needs rank >= 2");
  const std::size_t n = a.dim(0);
  if (index >= n) throw DimensionError("select_leading: index out of range");
  const std::size_t inner = a.numel() / n;
  Shape out_shape(a.shape().begin() + 1, a.shape().end());
  auto x = a.data();
  Tensor out = make(std::move(out_shape),
                    std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(index * inner),
                                        x.begin() + static_cast<std::ptrdiff_t>((index + 1) * inner)));
  return finish("select_leading", out, {a}, [index, n](const Tensor& g) {
    return std::vector<Tensor>{embed_leading(g, index, n)};
  });
}

Tensor embed_leading(const Tensor& a, std::size_t index, std::size_t n) {
  if (index >= n) throw DimensionError("embed_leading: index out of range");
  Shape out_shape = a.shape();
  out_shape.insert(out_shape.begin(), n);
  std::vector<double> out(a.numel() * n, 0.0);
  std::copy(a.data().begin(), a.data().end(), out.begin() + static_cast<std::ptrdiff_t>(index * a.numel()));
  Tensor r = make(std::move(out_shape), std::move(out));
  return finish("embed_leading", r, {a}, [index](const Tensor& g) {
    return std::vector<Tensor>{select_leading(g, index)};
  });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  Tensor r = make(Shape{n, m}, std::move(out));
  return finish("transpose", r, {a}, [](const Tensor& g) { return std::vector<Tensor>{transpose(g)}; });
}

namespace {

// a [m,k] * b[n,k]^T -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = x[i * k + p];
      if (av == 0.0) continue;
      const double* brow = y.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  Tensor r = make(Shape{m, n}, std::move(out));
  return finish("matmul", r, {a, b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{a.requires_grad() ? matmul_nt(g, b) : Tensor(),
                               b.requires_grad() ? matmul(transpose(a), g) : Tensor()};
  });
}

namespace {

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank("matmul_nt", a, 2);
  require_rank("matmul_nt", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("inner dimensions differ " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()) + "^T");
  }
  std::vector<double> out(m * n);
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = x.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = y.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      out[i * n + j] = s;
    }
  }
  Tensor r = make(Shape{m, n}, std::move(out));
  return finish("matmul_nt", r, {a, b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{a.requires_grad() ? matmul(g, b) : Tensor(),
                               b.requires_grad() ? matmul(transpose(g), a) : Tensor()};
  });
}

}  // namespace

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank("linear input", input, 2);
  require_rank("linear weight", weight, 2);
  require_rank("linear bias", bias, 1);
  if (input.dim(1) != weight.dim(1)) {
    throw DimensionError("linear: input " + shape_to_string(input.shape()) + " vs weight " +
                         shape_to_string(weight.shape()));
  }
  if (bias.dim(0) != weight.dim(0)) {
    throw DimensionError("linear: bias " + shape_to_string(bias.shape()) + " vs weight " +
                         shape_to_string(weight.shape()));
  }
  return add(matmul_nt(input, weight), broadcast_axis(bias, 0, input.dim(0)));
}

Tensor avg_pool2x2(const Tensor& a) {
  require_rank("avg_pool2x2", a, 4);
  const std::size_t B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  if (H % 2 || W % 2) throw DimensionError("avg_pool2x2 needs even spatial dims");
  const std::size_t Ho = H / 2, Wo = W / 2;
  std::vector<double> out(B * C * Ho * Wo);
  auto x = a.data();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* src = x.data() + bc * H * W;
    double* dst = out.data() + bc * Ho * Wo;
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        const double* p = src + 2 * i * W + 2 * j;
        dst[i * Wo + j] = 0.25 * (p[0] + p[1] + p[W] + p[W + 1]);
      }
  }
  Tensor r = make(Shape{B, C, Ho, Wo}, std::move(out));
  return finish("avg_pool2x2", r, {a}, [](const Tensor& g) { return std::vector<Tensor>{avg_unpool2x2(g)}; });
}

Tensor avg_unpool2x2(const Tensor& a) {
  require_rank("avg_unpool2x2", a, 4);
  const std::size_t B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  const std::size_t Ho = H * 2, Wo = W * 2;
  std::vector<double> out(B * C * Ho * Wo);
  auto x = a.data();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* src = x.data() + bc * H * W;
    double* dst = out.data() + bc * Ho * Wo;
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) dst[i * Wo + j] = 0.25 * src[(i / 2) * W + j / 2];
  }
  Tensor r = make(Shape{B, C, Ho, Wo}, std::move(out));
  return finish("avg_unpool2x2", r, {a}, [](const Tensor& g) { return std::vector<Tensor>{avg_pool2x2(g)}; });
}

Tensor logsumexp_rows(const Tensor& a) {
  require_rank("logsumexp_rows", a, 2);
  const std::size_t B = a.dim(0), K = a.dim(1);
  std::vector<double> out(B);
  auto x = a.data();
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = x.data() + b * K;
    const double mx = *std::max_element(row, row + K);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(row[k] - mx);
    out[b] = mx + std::log(s);
  }
  Tensor r = make(Shape{B}, std::move(out));
  return finish("logsumexp_rows", r, {a}, [a, r, K](const Tensor& g) {
    Tensor probs = exp(sub(a, broadcast_axis(r, 1, K)));
    return std::vector<Tensor>{mul(broadcast_axis(g, 1, K), probs)};
  });
}

Tensor log_softmax(const Tensor& logits) {
  require_rank("log_softmax", logits, 2);
  return sub(logits, broadcast_axis(logsumexp_rows(logits), 1, logits.dim(1)));
}

Tensor softmax(const Tensor& logits) { return exp(log_softmax(logits)); }

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& target) {
  require_same_shape("softmax_cross_entropy", logits, target);
  require_rank("softmax_cross_entropy", logits, 2);
  const double inv_batch = 1.0 / static_cast<double>(logits.dim(0));
  return scale(sum(mul(target, log_softmax(logits))), -inv_batch);
}

Tensor squared_difference_sum(const Tensor& a, const Tensor& b) {
  Tensor d = sub(a, b);
  return sum(mul(d, d));
}

Tensor one_hot(std::size_t label, std::size_t num_classes) {
  if (label >= num_classes) {
    throw UsageError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(num_classes) + " classes");
  }
  std::vector<double> v(num_classes, 0.0);
  v[label] = 1.0;
  return Tensor(Shape{1, num_classes}, std::move(v));
}

}  // namespace spikeleak
