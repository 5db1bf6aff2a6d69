#include "kernels.hpp"

#include <cstdlib>
#include <string>
#include <vector>

#include "oodkit/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace oodkit {

namespace {
int g_threads = 1;
}

void set_num_threads(int n) { g_threads = n < 1 ? 1 : n; }

int num_threads() { return g_threads; }

void configure_threads_from_env() {
  if (const char* env = std::getenv("OODKIT_THREADS")) {
    try {
      set_num_threads(std::stoi(env));
    } catch (const std::exception&) {
      // ignore malformed values; keep the current setting
    }
  }
}

namespace kernels {

namespace {

// Rows are independent, so partitioning them across threads leaves every
// output element's summation order untouched.
template <typename T>
void gemm_rows(const T* a, const T* b, T* c, std::size_t row_begin, std::size_t row_end,
               std::size_t k, std::size_t n) {
  for (std::size_t i = row_begin; i < row_end; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

template <typename T>
void gemm_dispatch(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
  const int threads = num_threads();
  if (threads > 1 && m * k * n > (1u << 16)) {
#pragma omp parallel for num_threads(threads) schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
      gemm_rows(a, b, c, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1, k, n);
    }
    return;
  }
#endif
  gemm_rows(a, b, c, 0, m, k, n);
}

template <typename T>
std::vector<T> transposed(const T* src, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  }
  return out;
}

}  // namespace

template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  gemm_dispatch(a, b, c, m, k, n);
}

template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto bt = transposed(b, n, k);
  gemm_dispatch(a, bt.data(), c, m, k, n);
}

template <typename T>
void gemm_tn_acc(const T* a, const T* g, T* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto at = transposed(a, m, k);
  gemm_dispatch(at.data(), g, c, k, m, n);
}

template void gemm_acc<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
template void gemm_acc<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
template void gemm_nt_acc<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
template void gemm_nt_acc<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
template void gemm_tn_acc<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
template void gemm_tn_acc<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);

}  // namespace kernels
}  // namespace oodkit
