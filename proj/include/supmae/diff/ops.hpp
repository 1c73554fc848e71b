#pragma once

// Differentiable operations. Every op validates shapes, computes its output
// eagerly, and registers a backward rule on the owning graph. No implicit
// broadcasting: only `add_broadcast`/`linear` apply an operand over leading
// batch axes.

#include <cstddef>
#include <vector>

#include "supmae/diff/graph.hpp"
#include "supmae/diff/tensor.hpp"

namespace supmae::diff {

inline constexpr double kLayerNormEps = 1e-6;
inline constexpr double kBatchNormEps = 1e-5;

// a[m x k] . b[k x n]
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

// x[... x k] . w[k x n] (+ bias[n]); leading axes are batch axes.
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias = {});

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> sub(Var<T> a, Var<T> b);

template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> a, T factor);

// x[lead..., s...] + y[s...]: y's shape must be a suffix of x's shape.
template <typename T>
Var<T> add_broadcast(Var<T> x, Var<T> y);

template <typename T>
Var<T> sum(Var<T> a);

template <typename T>
Var<T> mean(Var<T> a);

template <typename T>
Var<T> reshape(Var<T> a, Shape shape);

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = static_cast<T>(kLayerNormEps));

// Tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename T>
Var<T> gelu(Var<T> x);

template <typename T>
Var<T> relu(Var<T> x);

// Max-shifted softmax over the last axis.
template <typename T>
Var<T> softmax(Var<T> x);

// softmax(q k^T / sqrt(d_h)) v over tensors shaped [..., L, d_h]; leading
// axes index independent (batch, head) groups.
template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v);

// [B, L, h*d_h] -> [B, h, L, d_h] and back.
template <typename T>
Var<T> split_heads(Var<T> x, std::size_t heads);

template <typename T>
Var<T> merge_heads(Var<T> x);

// x[..., offset : offset + length] along the last axis.
template <typename T>
Var<T> slice_last(Var<T> x, std::size_t offset, std::size_t length);

// Rows of table[R x d] selected by `rows`; output shape is lead + [d] with
// product(lead) == rows.size().
template <typename T>
Var<T> gather_rows(Var<T> table, const std::vector<std::size_t>& rows, Shape lead);

// [B, L, d] -> [B, d] by averaging over L.
template <typename T>
Var<T> mean_tokens(Var<T> x);

// [B, L, d] -> [B, count, d] starting at token `start`.
template <typename T>
Var<T> slice_tokens(Var<T> x, std::size_t start, std::size_t count);

// token[d] placed before every sequence of x[B, L, d].
template <typename T>
Var<T> prepend_token(Var<T> token, Var<T> x);

// Builds a [B, N, D] sequence in original patch order. For sample b, sequence
// slot j lands at patch order[b][j]; slots j < V take x[b, j], the rest take
// `fill`.
template <typename T>
Var<T> unshuffle_fill(Var<T> x, Var<T> fill, const std::vector<std::vector<std::size_t>>& order);

// Batch-statistics normalization of x[B x d] (biased variance). gamma/beta
// may be null for a non-affine layer.
template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = static_cast<T>(kBatchNormEps));

// Same layer with frozen statistics.
template <typename T>
Var<T> batch_norm_eval(Var<T> x, const Tensor<T>& running_mean, const Tensor<T>& running_var,
                       Var<T> gamma, Var<T> beta, T eps = static_cast<T>(kBatchNormEps));

struct BatchMoments {
  std::vector<double> mean;
  std::vector<double> biased_var;
};

// Per-feature mean/variance of x[B x d] accumulated exactly as batch_norm does.
template <typename T>
BatchMoments batch_moments(const Tensor<T>& x);

// Mean squared error between pred[B, N, K] at rows masked[b] and
// target[B, M, K]; visible rows receive exactly zero gradient.
template <typename T>
Var<T> masked_mse(Var<T> pred, const Tensor<T>& target,
                  const std::vector<std::vector<std::size_t>>& masked);

// Mean over the batch of CE(softmax(logits / tau), smoothed one-hot).
template <typename T>
Var<T> cross_entropy(Var<T> logits, const std::vector<int>& labels, T tau, T label_smoothing);

}  // namespace supmae::diff
