// Copyright (c) the cotta project authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef COTTA_CORE_OPS_HPP_
#define COTTA_CORE_OPS_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "cotta/core/tensor.hpp"

// Differentiable free functions over Tensor<S>. Broadcasting is restricted
// to exact shape match or a plain scalar; anything else is a ShapeError.

namespace cotta {

namespace detail {

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

template <typename S>
using RowMat =
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
Eigen::Map<const RowMat<S>> as_matrix(const ArrayX<S>& a, int rows, int cols) {
  return Eigen::Map<const RowMat<S>>(a.data(), rows, cols);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise (exact-shape) and scalar ops

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "add");
  return make_op<S>(a.shape(), a.array() + b.array(), {a, b},
                    [](detail::Node<S>& n) {
                      if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
                      if (n.parents[1]->requires_grad) n.parents[1]->accumulate(n.grad);
                    });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "sub");
  return make_op<S>(a.shape(), a.array() - b.array(), {a, b},
                    [](detail::Node<S>& n) {
                      if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
                      if (n.parents[1]->requires_grad)
                        n.parents[1]->accumulate((-n.grad).eval());
                    });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "mul");
  return make_op<S>(a.shape(), a.array() * b.array(), {a, b},
                    [](detail::Node<S>& n) {
                      if (n.parents[0]->requires_grad)
                        n.parents[0]->accumulate((n.grad * n.parents[1]->value).eval());
                      if (n.parents[1]->requires_grad)
                        n.parents[1]->accumulate((n.grad * n.parents[0]->value).eval());
                    });
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "div");
  return make_op<S>(a.shape(), a.array() / b.array(), {a, b},
                    [](detail::Node<S>& n) {
                      const auto& bv = n.parents[1]->value;
                      if (n.parents[0]->requires_grad)
                        n.parents[0]->accumulate((n.grad / bv).eval());
                      if (n.parents[1]->requires_grad)
                        n.parents[1]->accumulate(
                            (-n.grad * n.parents[0]->value / (bv * bv)).eval());
                    });
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, S s) {
  return make_op<S>(a.shape(), a.array() + s, {a}, [](detail::Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
  });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, S s) {
  return add(a, S(-s));
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, S s) {
  return make_op<S>(a.shape(), a.array() * s, {a}, [s](detail::Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate((n.grad * s).eval());
  });
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, S s) {
  return make_op<S>(a.shape(), a.array() / s, {a}, [s](detail::Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate((n.grad / s).eval());
  });
}

template <typename S>
Tensor<S> neg(const Tensor<S>& a) {
  return mul(a, S(-1));
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  return make_op<S>(a.shape(), a.array().max(S(0)), {a}, [](detail::Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    ArrayX<S> d = (n.parents[0]->value > S(0)).template cast<S>() * n.grad;
    n.parents[0]->accumulate(d);
  });
}

template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, S s) { return mul(a, s); }
template <typename S>
Tensor<S> operator*(S s, const Tensor<S>& a) { return mul(a, s); }

// ---------------------------------------------------------------------------
// Shape ops and reductions

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(a.shape()) +
                     " as " + shape_to_string(new_shape));
  }
  // Storage is flat row-major, so the gradient passes through unchanged.
  return make_op<S>(std::move(new_shape), a.array(), {a}, [](detail::Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
  });
}

// Collapse everything after the leading dimension: [B, ...] -> [B, rest].
template <typename S>
Tensor<S> flatten(const Tensor<S>& a) {
  const int b = a.dim(0);
  return reshape(a, Shape{b, static_cast<int>(a.numel() / b)});
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  ArrayX<S> v(1);
  v[0] = a.array().sum();
  return make_op<S>(Shape{1}, std::move(v), {a}, [](detail::Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    ArrayX<S> d = ArrayX<S>::Constant(n.parents[0]->value.size(), n.grad[0]);
    n.parents[0]->accumulate(d);
  });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  const S inv = S(1) / static_cast<S>(a.numel());
  ArrayX<S> v(1);
  v[0] = a.array().sum() * inv;
  return make_op<S>(Shape{1}, std::move(v), {a}, [inv](detail::Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    ArrayX<S> d = ArrayX<S>::Constant(n.parents[0]->value.size(), n.grad[0] * inv);
    n.parents[0]->accumulate(d);
  });
}

// ---------------------------------------------------------------------------
// Matrix multiply

// a: [m,k], b: [k,n] -> [m,n]. Backward: dA = g.Bt, dB = At.g.
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions do not match, " +
                     shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  ArrayX<S> out(static_cast<int64_t>(m) * n);
  Eigen::Map<detail::RowMat<S>>(out.data(), m, n) =
      detail::as_matrix(a.array(), m, k) * detail::as_matrix(b.array(), k, n);
  return make_op<S>(
      Shape{m, n}, std::move(out), {a, b}, [m, k, n](detail::Node<S>& n_) {
        auto g = detail::as_matrix(n_.grad, m, n);
        if (n_.parents[0]->requires_grad) {
          ArrayX<S> da(static_cast<int64_t>(m) * k);
          Eigen::Map<detail::RowMat<S>>(da.data(), m, k) =
              g * detail::as_matrix(n_.parents[1]->value, k, n).transpose();
          n_.parents[0]->accumulate(da);
        }
        if (n_.parents[1]->requires_grad) {
          ArrayX<S> db(static_cast<int64_t>(k) * n);
          Eigen::Map<detail::RowMat<S>>(db.data(), k, n) =
              detail::as_matrix(n_.parents[0]->value, m, k).transpose() * g;
          n_.parents[1]->accumulate(db);
        }
      });
}

// ---------------------------------------------------------------------------
// Bias adds

// x: [B,F] + b: [F], broadcast over rows.
template <typename S>
Tensor<S> add_row_bias(const Tensor<S>& x, const Tensor<S>& b) {
  if (x.ndim() != 2 || b.ndim() != 1 || b.dim(0) != x.dim(1)) {
    throw ShapeError("add_row_bias: " + shape_to_string(x.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  const int rows = x.dim(0), cols = x.dim(1);
  ArrayX<S> out(x.numel());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[static_cast<int64_t>(r) * cols + c] =
          x.array()[static_cast<int64_t>(r) * cols + c] + b.array()[c];
  return make_op<S>(x.shape(), std::move(out), {x, b},
                    [rows, cols](detail::Node<S>& n) {
                      if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
                      if (n.parents[1]->requires_grad) {
                        ArrayX<S> db = ArrayX<S>::Zero(cols);
                        for (int r = 0; r < rows; ++r)
                          for (int c = 0; c < cols; ++c)
                            db[c] += n.grad[static_cast<int64_t>(r) * cols + c];
                        n.parents[1]->accumulate(db);
                      }
                    });
}

// x: [B,C,H,W] + b: [C], broadcast over batch and spatial dims.
template <typename S>
Tensor<S> add_channel_bias(const Tensor<S>& x, const Tensor<S>& b) {
  if (x.ndim() != 4 || b.ndim() != 1 || b.dim(0) != x.dim(1)) {
    throw ShapeError("add_channel_bias: " + shape_to_string(x.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
  const int B = x.dim(0), C = x.dim(1);
  const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  ArrayX<S> out(x.numel());
  int64_t i = 0;
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c) {
      const S bias = b.array()[c];
      for (int64_t k = 0; k < hw; ++k, ++i) out[i] = x.array()[i] + bias;
    }
  return make_op<S>(x.shape(), std::move(out), {x, b},
                    [B, C, hw](detail::Node<S>& n_) {
                      if (n_.parents[0]->requires_grad) n_.parents[0]->accumulate(n_.grad);
                      if (n_.parents[1]->requires_grad) {
                        ArrayX<S> db = ArrayX<S>::Zero(C);
                        int64_t i = 0;
                        for (int n = 0; n < B; ++n)
                          for (int c = 0; c < C; ++c)
                            for (int64_t k = 0; k < hw; ++k, ++i) db[c] += n_.grad[i];
                        n_.parents[1]->accumulate(db);
                      }
                    });
}

// ---------------------------------------------------------------------------
// Softmax family (rowwise over [B,K], max-subtracted for stability)

template <typename S>
void check_rows(const Tensor<S>& x, const char* op) {
  if (x.ndim() != 2 || x.dim(1) < 1) {
    throw ShapeError(std::string(op) + ": expected [B,K] input, got " +
                     shape_to_string(x.shape()));
  }
}

template <typename S>
Tensor<S> softmax(const Tensor<S>& logits) {
  check_rows(logits, "softmax");
  const int B = logits.dim(0), K = logits.dim(1);
  ArrayX<S> out(logits.numel());
  for (int b = 0; b < B; ++b) {
    const int64_t off = static_cast<int64_t>(b) * K;
    S mx = logits.array()[off];
    for (int k = 1; k < K; ++k) mx = std::max(mx, logits.array()[off + k]);
    S denom = S(0);
    for (int k = 0; k < K; ++k) {
      out[off + k] = std::exp(logits.array()[off + k] - mx);
      denom += out[off + k];
    }
    for (int k = 0; k < K; ++k) out[off + k] /= denom;
  }
  return make_op<S>(logits.shape(), std::move(out), {logits},
                    [B, K](detail::Node<S>& n) {
                      if (!n.parents[0]->requires_grad) return;
                      ArrayX<S> d(n.value.size());
                      for (int b = 0; b < B; ++b) {
                        const int64_t off = static_cast<int64_t>(b) * K;
                        S dot = S(0);
                        for (int k = 0; k < K; ++k) dot += n.grad[off + k] * n.value[off + k];
                        for (int k = 0; k < K; ++k)
                          d[off + k] = n.value[off + k] * (n.grad[off + k] - dot);
                      }
                      n.parents[0]->accumulate(d);
                    });
}

template <typename S>
Tensor<S> log_softmax(const Tensor<S>& logits) {
  check_rows(logits, "log_softmax");
  const int B = logits.dim(0), K = logits.dim(1);
  ArrayX<S> out(logits.numel());
  for (int b = 0; b < B; ++b) {
    const int64_t off = static_cast<int64_t>(b) * K;
    S mx = logits.array()[off];
    for (int k = 1; k < K; ++k) mx = std::max(mx, logits.array()[off + k]);
    S denom = S(0);
    for (int k = 0; k < K; ++k) denom += std::exp(logits.array()[off + k] - mx);
    const S lse = mx + std::log(denom);
    for (int k = 0; k < K; ++k) out[off + k] = logits.array()[off + k] - lse;
  }
  return make_op<S>(logits.shape(), std::move(out), {logits},
                    [B, K](detail::Node<S>& n) {
                      if (!n.parents[0]->requires_grad) return;
                      ArrayX<S> d(n.value.size());
                      for (int b = 0; b < B; ++b) {
                        const int64_t off = static_cast<int64_t>(b) * K;
                        S gsum = S(0);
                        for (int k = 0; k < K; ++k) gsum += n.grad[off + k];
                        for (int k = 0; k < K; ++k)
                          d[off + k] = n.grad[off + k] - std::exp(n.value[off + k]) * gsum;
                      }
                      n.parents[0]->accumulate(d);
                    });
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation convention, zero padding)

// input: [B,C,H,W], kernel: [O,C,kh,kw]. Output spatial dims are
// floor((H + 2p - kh)/s) + 1. The accumulator for each output element sums
// over (c, kh, kw) in ascending nesting order with sequential adds; this
// order is part of the contract and reproduced by the reference check.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& kernel, int stride,
                 int padding) {
  if (input.ndim() != 4 || kernel.ndim() != 4 || input.dim(1) != kernel.dim(1)) {
    throw ShapeError("conv2d: incompatible shapes " +
                     shape_to_string(input.shape()) + " and " +
                     shape_to_string(kernel.shape()));
  }
  if (stride < 1 || padding < 0) {
    throw ContractError("conv2d: stride must be >= 1 and padding >= 0");
  }
  const int B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int O = kernel.dim(0), KH = kernel.dim(2), KW = kernel.dim(3);
  if (KH > H + 2 * padding || KW > W + 2 * padding) {
    throw ShapeError("conv2d: kernel " + shape_to_string(kernel.shape()) +
                     " larger than padded input " + shape_to_string(input.shape()) +
                     " (padding " + std::to_string(padding) + ")");
  }
  const int OH = (H + 2 * padding - KH) / stride + 1;
  const int OW = (W + 2 * padding - KW) / stride + 1;

  ArrayX<S> out(static_cast<int64_t>(B) * O * OH * OW);
  const S* in = input.data();
  const S* w = kernel.data();
  int64_t oi = 0;
  for (int b = 0; b < B; ++b) {
    for (int o = 0; o < O; ++o) {
      for (int y = 0; y < OH; ++y) {
        const int iy0 = y * stride - padding;
        for (int x = 0; x < OW; ++x) {
          const int ix0 = x * stride - padding;
          S acc = S(0);
          for (int c = 0; c < C; ++c) {
            const S* in_c = in + (static_cast<int64_t>(b) * C + c) * H * W;
            const S* w_c = w + ((static_cast<int64_t>(o) * C + c) * KH) * KW;
            for (int kh = 0; kh < KH; ++kh) {
              const int iy = iy0 + kh;
              if (iy < 0 || iy >= H) continue;
              const S* in_row = in_c + static_cast<int64_t>(iy) * W;
              const S* w_row = w_c + static_cast<int64_t>(kh) * KW;
              for (int kw = 0; kw < KW; ++kw) {
                const int ix = ix0 + kw;
                if (ix < 0 || ix >= W) continue;
                acc += in_row[ix] * w_row[kw];
              }
            }
          }
          out[oi++] = acc;
        }
      }
    }
  }

  auto backprop = [B, C, H, W, O, KH, KW, OH, OW, stride,
                   padding](detail::Node<S>& n) {
    const bool need_dx = n.parents[0]->requires_grad;
    const bool need_dw = n.parents[1]->requires_grad;
    if (!need_dx && !need_dw) return;
    const S* in = n.parents[0]->value.data();
    const S* w = n.parents[1]->value.data();
    ArrayX<S> dx, dw;
    if (need_dx) dx = ArrayX<S>::Zero(n.parents[0]->value.size());
    if (need_dw) dw = ArrayX<S>::Zero(n.parents[1]->value.size());
    int64_t oi = 0;
    for (int b = 0; b < B; ++b) {
      for (int o = 0; o < O; ++o) {
        for (int y = 0; y < OH; ++y) {
          const int iy0 = y * stride - padding;
          for (int x = 0; x < OW; ++x) {
            const int ix0 = x * stride - padding;
            const S g = n.grad[oi++];
            if (g == S(0)) continue;
            for (int c = 0; c < C; ++c) {
              const int64_t in_off = (static_cast<int64_t>(b) * C + c) * H * W;
              const int64_t w_off = (static_cast<int64_t>(o) * C + c) * KH * KW;
              for (int kh = 0; kh < KH; ++kh) {
                const int iy = iy0 + kh;
                if (iy < 0 || iy >= H) continue;
                for (int kw = 0; kw < KW; ++kw) {
                  const int ix = ix0 + kw;
                  if (ix < 0 || ix >= W) continue;
                  const int64_t ii = in_off + static_cast<int64_t>(iy) * W + ix;
                  const int64_t wi = w_off + static_cast<int64_t>(kh) * KW + kw;
                  if (need_dx) dx[ii] += g * w[wi];
                  if (need_dw) dw[wi] += g * in[ii];
                }
              }
            }
          }
        }
      }
    }
    if (need_dx) n.parents[0]->accumulate(dx);
    if (need_dw) n.parents[1]->accumulate(dw);
  };
  return make_op<S>(Shape{B, O, OH, OW}, std::move(out), {input, kernel},
                    std::move(backprop));
}

// ---------------------------------------------------------------------------
// Max pooling (no padding); ties resolve to the first element scanned.

template <typename S>
Tensor<S> maxpool2d(const Tensor<S>& input, int ksize, int stride) {
  if (input.ndim() != 4) {
    throw ShapeError("maxpool2d: expected [B,C,H,W], got " +
                     shape_to_string(input.shape()));
  }
  const int B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (ksize > H || ksize > W) {
    throw ShapeError("maxpool2d: window " + std::to_string(ksize) +
                     " larger than input " + shape_to_string(input.shape()));
  }
  const int OH = (H - ksize) / stride + 1;
  const int OW = (W - ksize) / stride + 1;
  ArrayX<S> out(static_cast<int64_t>(B) * C * OH * OW);
  std::vector<int64_t> argmax(static_cast<size_t>(out.size()));
  const S* in = input.data();
  int64_t oi = 0;
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      const int64_t base = (static_cast<int64_t>(b) * C + c) * H * W;
      for (int y = 0; y < OH; ++y) {
        for (int x = 0; x < OW; ++x) {
          int64_t best_i = base + static_cast<int64_t>(y * stride) * W + x * stride;
          S best = in[best_i];
          for (int ky = 0; ky < ksize; ++ky) {
            for (int kx = 0; kx < ksize; ++kx) {
              const int64_t i =
                  base + static_cast<int64_t>(y * stride + ky) * W + (x * stride + kx);
              if (in[i] > best) {
                best = in[i];
                best_i = i;
              }
            }
          }
          out[oi] = best;
          argmax[static_cast<size_t>(oi)] = best_i;
          ++oi;
        }
      }
    }
  }
  return make_op<S>(Shape{B, C, OH, OW}, std::move(out), {input},
                    [argmax = std::move(argmax)](detail::Node<S>& n) {
                      if (!n.parents[0]->requires_grad) return;
                      ArrayX<S> dx = ArrayX<S>::Zero(n.parents[0]->value.size());
                      for (int64_t i = 0; i < n.grad.size(); ++i)
                        dx[argmax[static_cast<size_t>(i)]] += n.grad[i];
                      n.parents[0]->accumulate(dx);
                    });
}

// ---------------------------------------------------------------------------
// Batch normalization

template <typename S>
struct BatchNormStats {
  ArrayX<S> mean;
  ArrayX<S> var;  // biased (1/N)
};

namespace detail {

// Channel layout for [B,C,H,W] (per-channel over B*H*W) or [B,F]
// (per-feature over B).
struct BnLayout {
  int channels;
  int64_t per_channel;     // reduction count N
  int64_t outer;           // leading batch iterations
  int64_t inner;           // contiguous elements per (outer, channel) block
};

template <typename S>
BnLayout bn_layout(const Tensor<S>& x) {
  if (x.ndim() == 4) {
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    return BnLayout{x.dim(1), x.dim(0) * hw, x.dim(0), hw};
  }
  if (x.ndim() == 2) {
    return BnLayout{x.dim(1), x.dim(0), x.dim(0), 1};
  }
  throw ShapeError("batch_norm: expected [B,C,H,W] or [B,F], got " +
                   shape_to_string(x.shape()));
}

}  // namespace detail

// Normalizes per channel. When fixed_mean/fixed_var are given they are used
// as constants (no gradient through the statistics); otherwise statistics
// come from the current batch and the full batch-norm backward applies.
// out_stats, when non-null, receives the batch statistics that were used.
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma,
                     const Tensor<S>& beta, const ArrayX<S>* fixed_mean,
                     const ArrayX<S>* fixed_var, S eps,
                     BatchNormStats<S>* out_stats = nullptr) {
  const detail::BnLayout L = detail::bn_layout(x);
  if (gamma.numel() != L.channels || beta.numel() != L.channels) {
    throw ShapeError("batch_norm: affine parameters " +
                     shape_to_string(gamma.shape()) + "/" +
                     shape_to_string(beta.shape()) + " do not match channels " +
                     std::to_string(L.channels));
  }
  const bool use_fixed = fixed_mean != nullptr;
  ArrayX<S> mean(L.channels), var(L.channels);
  if (use_fixed) {
    mean = *fixed_mean;
    var = *fixed_var;
  } else {
    mean.setZero();
    var.setZero();
    const S* xv = x.data();
    for (int64_t o = 0; o < L.outer; ++o)
      for (int c = 0; c < L.channels; ++c) {
        const S* p = xv + (o * L.channels + c) * L.inner;
        for (int64_t k = 0; k < L.inner; ++k) mean[c] += p[k];
      }
    mean /= static_cast<S>(L.per_channel);
    for (int64_t o = 0; o < L.outer; ++o)
      for (int c = 0; c < L.channels; ++c) {
        const S* p = xv + (o * L.channels + c) * L.inner;
        const S m = mean[c];
        for (int64_t k = 0; k < L.inner; ++k) var[c] += (p[k] - m) * (p[k] - m);
      }
    var /= static_cast<S>(L.per_channel);
  }
  if (out_stats) {
    out_stats->mean = mean;
    out_stats->var = var;
  }
  ArrayX<S> inv_std = (var + eps).sqrt().inverse();

  ArrayX<S> out(x.numel());
  {
    const S* xv = x.data();
    for (int64_t o = 0; o < L.outer; ++o)
      for (int c = 0; c < L.channels; ++c) {
        const int64_t off = (o * L.channels + c) * L.inner;
        const S m = mean[c], is = inv_std[c];
        const S g = gamma.array()[c], b = beta.array()[c];
        for (int64_t k = 0; k < L.inner; ++k)
          out[off + k] = (xv[off + k] - m) * is * g + b;
      }
  }

  auto backprop = [L, mean = std::move(mean), inv_std = std::move(inv_std),
                   use_fixed](detail::Node<S>& n) {
    auto& xn = *n.parents[0];
    auto& gn = *n.parents[1];
    auto& bn = *n.parents[2];
    const S* xv = xn.value.data();
    const S* gv = n.grad.data();
    const int C = L.channels;

    // Per-channel reductions of g and g*xhat.
    ArrayX<S> sum_g = ArrayX<S>::Zero(C), sum_gx = ArrayX<S>::Zero(C);
    for (int64_t o = 0; o < L.outer; ++o)
      for (int c = 0; c < C; ++c) {
        const int64_t off = (o * C + c) * L.inner;
        const S m = mean[c], is = inv_std[c];
        for (int64_t k = 0; k < L.inner; ++k) {
          const S xhat = (xv[off + k] - m) * is;
          sum_g[c] += gv[off + k];
          sum_gx[c] += gv[off + k] * xhat;
        }
      }
    if (gn.requires_grad) gn.accumulate(sum_gx);
    if (bn.requires_grad) bn.accumulate(sum_g);
    if (!xn.requires_grad) return;

    ArrayX<S> dx(xn.value.size());
    const S invN = S(1) / static_cast<S>(L.per_channel);
    for (int64_t o = 0; o < L.outer; ++o)
      for (int c = 0; c < C; ++c) {
        const int64_t off = (o * C + c) * L.inner;
        const S m = mean[c], is = inv_std[c], gamma_c = gn.value[c];
        for (int64_t k = 0; k < L.inner; ++k) {
          const S g = gv[off + k] * gamma_c;
          if (use_fixed) {
            dx[off + k] = g * is;
          } else {
            const S xhat = (xv[off + k] - m) * is;
            dx[off + k] =
                is * (g - invN * gamma_c * (sum_g[c] + xhat * sum_gx[c]));
          }
        }
      }
    xn.accumulate(dx);
  };
  return make_op<S>(x.shape(), std::move(out), {x, gamma, beta},
                    std::move(backprop));
}

// ---------------------------------------------------------------------------
// Non-differentiable helpers

template <typename S>
std::vector<int> argmax_rows(const Tensor<S>& probs) {
  check_rows(probs, "argmax_rows");
  const int B = probs.dim(0), K = probs.dim(1);
  std::vector<int> out(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    const int64_t off = static_cast<int64_t>(b) * K;
    int best = 0;
    for (int k = 1; k < K; ++k)
      if (probs.array()[off + k] > probs.array()[off + best]) best = k;
    out[static_cast<size_t>(b)] = best;
  }
  return out;
}

template <typename S>
std::vector<S> rowwise_max(const Tensor<S>& probs) {
  check_rows(probs, "rowwise_max");
  const int B = probs.dim(0), K = probs.dim(1);
  std::vector<S> out(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    const int64_t off = static_cast<int64_t>(b) * K;
    S best = probs.array()[off];
    for (int k = 1; k < K; ++k) best = std::max(best, probs.array()[off + k]);
    out[static_cast<size_t>(b)] = best;
  }
  return out;
}

}  // namespace cotta

#endif  // COTTA_CORE_OPS_HPP_
