#pragma once

#include "oodkit/tensor.hpp"

namespace oodkit::linalg {

// Unbiased sample covariance of the rows of an n x d matrix (n - 1
// denominator). The result is exactly symmetric. Needs n >= 2.
template <typename T>
Tensor<T> covariance(const Tensor<T>& rows);

/// Inverse of (m + jitter * I) via Cholesky factorization.
///
/// If the factorization breaks down, jitter escalates through 1e-6, 1e-4 and
/// 1e-2 times the mean diagonal of `m` (or times 1 for a zero diagonal),
/// skipping rungs not larger than the requested jitter. The jitter that
/// succeeded is written to `jitter_used`. Throws SingularMatrixError naming
/// the last jitter tried when every rung fails.
template <typename T>
Tensor<T> inverse_spd(const Tensor<T>& m, T jitter, T* jitter_used = nullptr);

}  // namespace oodkit::linalg
