#pragma once

#include <cstddef>

#include "oodkit/tensor.hpp"

// Differentiable tensor operations. Broadcasting is limited to leading batch
// dimensions: the second operand of add() may match a suffix of the first's
// shape. Everything else needs an explicit reshape/expand.
namespace oodkit::ops {

// [m x k] * [k x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Batched product [B x m x k] * [B x k x n].
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b);

// Swaps the last two axes of a rank-2 or rank-3 tensor.
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);

template <typename T>
Tensor<T> mean(const Tensor<T>& a);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

// Numerically stable softmax along `axis` (max-subtracted). NaN input is a
// NumericError.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

// Normalizes each row over the last axis with the biased variance, then
// applies the affine gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

// x * Phi(x) with the exact erf-based CDF.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

// Picks one index along `axis` and drops that axis.
template <typename T>
Tensor<T> select(const Tensor<T>& x, std::size_t axis, std::size_t index);

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis);

// Repeats x along a new leading axis of length n.
template <typename T>
Tensor<T> expand(const Tensor<T>& x, std::size_t n);

// [B x T x H*dk] -> [B*H x T x dk] and back.
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads);
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, std::size_t heads);

// x[... x k] * w[k x n] (+ b[n]). `b` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

}  // namespace oodkit::ops
