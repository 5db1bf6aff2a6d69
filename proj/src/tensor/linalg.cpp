#include "oodkit/linalg.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "oodkit/errors.hpp"

namespace oodkit::linalg {

template <typename T>
Tensor<T> covariance(const Tensor<T>& rows) {
  if (rows.rank() != 2) throw ShapeError("covariance: expected n x d, got " + to_string(rows.shape()));
  const std::size_t n = rows.dim(0), d = rows.dim(1);
  if (n < 2) {
    throw InsufficientSamplesError("covariance needs at least 2 samples, got " + std::to_string(n));
  }
  auto x = rows.data();
  std::vector<T> mu(d, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mu[j] += x[i * d + j];
  }
  for (auto& v : mu) v /= static_cast<T>(n);

  std::vector<T> cov(d * d, T(0));
  std::vector<T> centered(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) centered[j] = x[i * d + j] - mu[j];
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a; b < d; ++b) cov[a * d + b] += centered[a] * centered[b];
    }
  }
  const T denom = static_cast<T>(n - 1);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      cov[a * d + b] /= denom;
      cov[b * d + a] = cov[a * d + b];
    }
  }
  return Tensor<T>({d, d}, std::move(cov));
}

namespace {

// Lower-triangular Cholesky factor of a + jitter*I, or nullopt on breakdown.
template <typename T>
std::optional<std::vector<T>> cholesky(std::span<const T> a, std::size_t d, T jitter) {
  T max_diag = 0;
  for (std::size_t i = 0; i < d; ++i) max_diag = std::max(max_diag, std::abs(a[i * d + i] + jitter));
  const T tiny = std::numeric_limits<T>::epsilon() * static_cast<T>(d) * std::max(max_diag, T(1e-300));
  std::vector<T> l(d * d, T(0));
  for (std::size_t j = 0; j < d; ++j) {
    T diag = a[j * d + j] + jitter;
    for (std::size_t k = 0; k < j; ++k) diag -= l[j * d + k] * l[j * d + k];
    if (!(diag > tiny) || !std::isfinite(diag)) return std::nullopt;
    const T ljj = std::sqrt(diag);
    l[j * d + j] = ljj;
    for (std::size_t i = j + 1; i < d; ++i) {
      T s = a[i * d + j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i * d + k] * l[j * d + k];
      l[i * d + j] = s / ljj;
    }
  }
  return l;
}

// (L L^T)^{-1} by solving L L^T X = I column by column.
template <typename T>
std::vector<T> cholesky_inverse(const std::vector<T>& l, std::size_t d) {
  std::vector<T> inv(d * d, T(0));
  std::vector<T> y(d);
  for (std::size_t col = 0; col < d; ++col) {
    for (std::size_t i = 0; i < d; ++i) {
      T s = i == col ? T(1) : T(0);
      for (std::size_t k = 0; k < i; ++k) s -= l[i * d + k] * y[k];
      y[i] = s / l[i * d + i];
    }
    for (std::size_t ii = d; ii-- > 0;) {
      T s = y[ii];
      for (std::size_t k = ii + 1; k < d; ++k) s -= l[k * d + ii] * inv[k * d + col];
      inv[ii * d + col] = s / l[ii * d + ii];
    }
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a + 1; b < d; ++b) {
      const T avg = (inv[a * d + b] + inv[b * d + a]) / T(2);
      inv[a * d + b] = avg;
      inv[b * d + a] = avg;
    }
  }
  return inv;
}

}  // namespace

template <typename T>
Tensor<T> inverse_spd(const Tensor<T>& m, T jitter, T* jitter_used) {
  if (m.rank() != 2 || m.dim(0) != m.dim(1)) {
    throw ShapeError("inverse_spd: expected a square matrix, got " + to_string(m.shape()));
  }
  if (!(jitter >= T(0))) throw ContractError("inverse_spd: jitter must be non-negative");
  const std::size_t d = m.dim(0);
  auto a = m.data();
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const T x = a[i * d + j], y = a[j * d + i];
      if (std::abs(x - y) > T(1e-6) * std::max({std::abs(x), std::abs(y), T(1)})) {
        throw ContractError("inverse_spd: matrix is not symmetric");
      }
    }
  }

  T trace = 0;
  for (std::size_t i = 0; i < d; ++i) trace += a[i * d + i];
  const T scale = trace > T(0) ? trace / static_cast<T>(d) : T(1);

  std::vector<T> ladder{jitter};
  for (T rung : {T(1e-6), T(1e-4), T(1e-2)}) {
    if (rung * scale > ladder.back()) ladder.push_back(rung * scale);
  }
  for (T j : ladder) {
    if (auto l = cholesky<T>(a, d, j)) {
      if (jitter_used) *jitter_used = j;
      return Tensor<T>({d, d}, cholesky_inverse(*l, d));
    }
  }
  std::ostringstream os;
  os << "inverse_spd: factorization failed; final jitter tried " << ladder.back();
  throw SingularMatrixError(os.str(), static_cast<double>(ladder.back()));
}

template Tensor<float> covariance(const Tensor<float>&);
template Tensor<double> covariance(const Tensor<double>&);
template Tensor<float> inverse_spd(const Tensor<float>&, float, float*);
template Tensor<double> inverse_spd(const Tensor<double>&, double, double*);

}  // namespace oodkit::linalg
