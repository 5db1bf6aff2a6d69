#pragma once

#include <cstddef>

namespace oodkit::kernels {

// C[m x n] += A[m x k] * B[k x n], all row-major and contiguous.
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

// C[m x n] += A[m x k] * B^T where B is stored [n x k].
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

// C[k x n] += A^T * G where A is [m x k] and G is [m x n].
template <typename T>
void gemm_tn_acc(const T* a, const T* g, T* c, std::size_t m, std::size_t k, std::size_t n);

}  // namespace oodkit::kernels
