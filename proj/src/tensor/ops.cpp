#include "oodkit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "kernels.hpp"
#include "oodkit/errors.hpp"

namespace oodkit::ops {

namespace {

std::size_t product(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t p = 1;
  for (std::size_t i = begin; i < end; ++i) p *= s[i];
  return p;
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes differ: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n, T(0));
  kernels::gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Tensor<T>::from_op("matmul", {m, n}, std::move(out), {a, b},
                            [a, b, m, k, n](std::span<const T> g, std::span<const T>) {
                              if (a.requires_grad()) {
                                kernels::gemm_nt_acc(g.data(), b.data().data(),
                                                     a.grad_buffer().data(), m, n, k);
                              }
                              if (b.requires_grad()) {
                                kernels::gemm_tn_acc(a.data().data(), g.data(),
                                                     b.grad_buffer().data(), m, k, n);
                              }
                            });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw ShapeError("bmm: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<T> out(batch * m * n, T(0));
  for (std::size_t i = 0; i < batch; ++i) {
    kernels::gemm_acc(a.data().data() + i * m * k, b.data().data() + i * k * n,
                      out.data() + i * m * n, m, k, n);
  }
  return Tensor<T>::from_op(
      "bmm", {batch, m, n}, std::move(out), {a, b},
      [a, b, batch, m, k, n](std::span<const T> g, std::span<const T>) {
        for (std::size_t i = 0; i < batch; ++i) {
          const T* gi = g.data() + i * m * n;
          if (a.requires_grad()) {
            kernels::gemm_nt_acc(gi, b.data().data() + i * k * n,
                                 a.grad_buffer().data() + i * m * k, m, n, k);
          }
          if (b.requires_grad()) {
            kernels::gemm_tn_acc(a.data().data() + i * m * k, gi,
                                 b.grad_buffer().data() + i * k * n, m, k, n);
          }
        }
      });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2 && a.rank() != 3) {
    throw ShapeError("transpose: expected rank 2 or 3, got " + to_string(a.shape()));
  }
  const std::size_t r = a.rank();
  const std::size_t batch = r == 3 ? a.dim(0) : 1;
  const std::size_t rows = a.dim(r - 2), cols = a.dim(r - 1);
  Shape shape = a.shape();
  std::swap(shape[r - 2], shape[r - 1]);
  std::vector<T> out(a.size());
  auto src = a.data();
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t off = b * rows * cols;
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) out[off + j * rows + i] = src[off + i * cols + j];
    }
  }
  return Tensor<T>::from_op("transpose", std::move(shape), std::move(out), {a},
                            [a, batch, rows, cols](std::span<const T> g, std::span<const T>) {
                              auto ga = a.grad_buffer();
                              for (std::size_t b = 0; b < batch; ++b) {
                                const std::size_t off = b * rows * cols;
                                for (std::size_t i = 0; i < rows; ++i) {
                                  for (std::size_t j = 0; j < cols; ++j) {
                                    ga[off + i * cols + j] += g[off + j * rows + i];
                                  }
                                }
                              }
                            });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const bool suffix =
      sb.size() <= sa.size() && std::equal(sb.begin(), sb.end(), sa.end() - sb.size());
  if (!suffix) {
    throw ShapeError("add: shape " + to_string(sb) + " does not broadcast over " + to_string(sa));
  }
  const std::size_t inner = b.size();
  const std::size_t outer = a.size() / inner;
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t o = 0; o < outer; ++o) {
    T* row = out.data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) row[i] += bd[i];
  }
  return Tensor<T>::from_op("add", sa, std::move(out), {a, b},
                            [a, b, outer, inner](std::span<const T> g, std::span<const T>) {
                              if (a.requires_grad()) a.accumulate_grad(g);
                              if (b.requires_grad()) {
                                auto gb = b.grad_buffer();
                                for (std::size_t o = 0; o < outer; ++o) {
                                  const T* row = g.data() + o * inner;
                                  for (std::size_t i = 0; i < inner; ++i) gb[i] += row[i];
                                }
                              }
                            });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return Tensor<T>::from_op("mul", a.shape(), std::move(out), {a, b},
                            [a, b](std::span<const T> g, std::span<const T>) {
                              auto ad = a.data();
                              auto bd = b.data();
                              if (a.requires_grad()) {
                                auto ga = a.grad_buffer();
                                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bd[i];
                              }
                              if (b.requires_grad()) {
                                auto gb = b.grad_buffer();
                                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * ad[i];
                              }
                            });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return Tensor<T>::from_op("scale", a.shape(), std::move(out), {a},
                            [a, factor](std::span<const T> g, std::span<const T>) {
                              auto ga = a.grad_buffer();
                              for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * factor;
                            });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (auto v : a.data()) total += v;
  return Tensor<T>::from_op("sum", {}, {total}, {a}, [a](std::span<const T> g, std::span<const T>) {
    auto ga = a.grad_buffer();
    for (auto& v : ga) v += g[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  return Tensor<T>::from_op("reshape", std::move(shape), std::move(out), {a},
                            [a](std::span<const T> g, std::span<const T>) { a.accumulate_grad(g); });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + to_string(s));
  }
  for (auto v : x.data()) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
  }
  const std::size_t outer = product(s, 0, axis), len = s[axis], inner = product(s, axis + 1, s.size());
  std::vector<T> out(x.size());
  auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      T mx = xd[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xd[base + j * inner]);
      T total = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(xd[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      const T inv = T(1) / total;
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] *= inv;
    }
  }
  return Tensor<T>::from_op("softmax", s, std::move(out), {x},
                            [x, outer, len, inner](std::span<const T> g, std::span<const T> y) {
                              auto gx = x.grad_buffer();
                              for (std::size_t o = 0; o < outer; ++o) {
                                for (std::size_t i = 0; i < inner; ++i) {
                                  const std::size_t base = o * len * inner + i;
                                  T dot = 0;
                                  for (std::size_t j = 0; j < len; ++j) {
                                    dot += g[base + j * inner] * y[base + j * inner];
                                  }
                                  for (std::size_t j = 0; j < len; ++j) {
                                    const std::size_t at = base + j * inner;
                                    gx[at] += y[at] * (g[at] - dot);
                                  }
                                }
                              }
                            });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw ShapeError("layer_norm: affine shapes " + to_string(gamma.shape()) + "/" +
                     to_string(beta.shape()) + " do not match width " + std::to_string(d));
  }
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be positive");
  const std::size_t rows = x.size() / d;
  auto stats = std::make_shared<std::vector<T>>(2 * rows);  // mean, rstd per row
  std::vector<T> out(x.size());
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd.data() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T rstd = T(1) / std::sqrt(var + eps);
    (*stats)[2 * r] = mu;
    (*stats)[2 * r + 1] = rstd;
    T* o = out.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) o[j] = (row[j] - mu) * rstd * gd[j] + bd[j];
  }
  return Tensor<T>::from_op(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, stats, rows, d](std::span<const T> g, std::span<const T>) {
        auto xd = x.data();
        auto gd = gamma.data();
        std::span<T> gx, gg, gb;
        if (x.requires_grad()) gx = x.grad_buffer();
        if (gamma.requires_grad()) gg = gamma.grad_buffer();
        if (beta.requires_grad()) gb = beta.grad_buffer();
        std::vector<T> xhat(d), dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const T mu = (*stats)[2 * r], rstd = (*stats)[2 * r + 1];
          const T* row = xd.data() + r * d;
          const T* gr = g.data() + r * d;
          T mean_dxhat = 0, mean_dxhat_xhat = 0;
          for (std::size_t j = 0; j < d; ++j) {
            xhat[j] = (row[j] - mu) * rstd;
            dxhat[j] = gr[j] * gd[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xhat[j];
            if (!gg.empty()) gg[j] += gr[j] * xhat[j];
            if (!gb.empty()) gb[j] += gr[j];
          }
          if (gx.empty()) continue;
          mean_dxhat /= static_cast<T>(d);
          mean_dxhat_xhat /= static_cast<T>(d);
          T* gxr = gx.data() + r * d;
          for (std::size_t j = 0; j < d; ++j) {
            gxr[j] += rstd * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
          }
        }
      });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  std::vector<T> out(x.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = T(0.5) * xd[i] * (T(1) + std::erf(xd[i] * inv_sqrt2));
  }
  return Tensor<T>::from_op("gelu", x.shape(), std::move(out), {x},
                            [x, inv_sqrt2](std::span<const T> g, std::span<const T>) {
                              const T inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
                              auto xd = x.data();
                              auto gx = x.grad_buffer();
                              for (std::size_t i = 0; i < gx.size(); ++i) {
                                const T v = xd[i];
                                const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
                                const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
                                gx[i] += g[i] * (cdf + v * pdf);
                              }
                            });
}

template <typename T>
Tensor<T> select(const Tensor<T>& x, std::size_t axis, std::size_t index) {
  const auto& s = x.shape();
  if (axis >= s.size() || index >= s[axis]) {
    throw ShapeError("select: index " + std::to_string(index) + " on axis " +
                     std::to_string(axis) + " out of range for " + to_string(s));
  }
  const std::size_t outer = product(s, 0, axis), len = s[axis], inner = product(s, axis + 1, s.size());
  Shape shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) shape.push_back(s[i]);
  }
  std::vector<T> out(outer * inner);
  auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xd.data() + (o * len + index) * inner, inner, out.data() + o * inner);
  }
  return Tensor<T>::from_op("select", std::move(shape), std::move(out), {x},
                            [x, outer, len, inner, index](std::span<const T> g, std::span<const T>) {
                              auto gx = x.grad_buffer();
                              for (std::size_t o = 0; o < outer; ++o) {
                                T* dst = gx.data() + (o * len + index) * inner;
                                const T* src = g.data() + o * inner;
                                for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                              }
                            });
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  bool ok = sa.size() == sb.size() && axis < sa.size();
  for (std::size_t i = 0; ok && i < sa.size(); ++i) ok = i == axis || sa[i] == sb[i];
  if (!ok) {
    throw ShapeError("concat: cannot join " + to_string(sa) + " and " + to_string(sb) +
                     " on axis " + std::to_string(axis));
  }
  const std::size_t outer = product(sa, 0, axis), inner = product(sa, axis + 1, sa.size());
  const std::size_t ca = sa[axis] * inner, cb = sb[axis] * inner;
  Shape shape = sa;
  shape[axis] += sb[axis];
  std::vector<T> out(a.size() + b.size());
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(ad.data() + o * ca, ca, out.data() + o * (ca + cb));
    std::copy_n(bd.data() + o * cb, cb, out.data() + o * (ca + cb) + ca);
  }
  return Tensor<T>::from_op("concat", std::move(shape), std::move(out), {a, b},
                            [a, b, outer, ca, cb](std::span<const T> g, std::span<const T>) {
                              std::span<T> ga, gb;
                              if (a.requires_grad()) ga = a.grad_buffer();
                              if (b.requires_grad()) gb = b.grad_buffer();
                              for (std::size_t o = 0; o < outer; ++o) {
                                const T* src = g.data() + o * (ca + cb);
                                if (!ga.empty()) {
                                  for (std::size_t i = 0; i < ca; ++i) ga[o * ca + i] += src[i];
                                }
                                if (!gb.empty()) {
                                  for (std::size_t i = 0; i < cb; ++i) gb[o * cb + i] += src[ca + i];
                                }
                              }
                            });
}

template <typename T>
Tensor<T> expand(const Tensor<T>& x, std::size_t n) {
  if (n == 0) throw ShapeError("expand: repeat count must be >= 1");
  Shape shape{n};
  shape.insert(shape.end(), x.shape().begin(), x.shape().end());
  const std::size_t inner = x.size();
  std::vector<T> out(n * inner);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(x.data().data(), inner, out.data() + i * inner);
  return Tensor<T>::from_op("expand", std::move(shape), std::move(out), {x},
                            [x, n, inner](std::span<const T> g, std::span<const T>) {
                              auto gx = x.grad_buffer();
                              for (std::size_t i = 0; i < n; ++i) {
                                for (std::size_t j = 0; j < inner; ++j) gx[j] += g[i * inner + j];
                              }
                            });
}

template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
  require_rank(x, 3, "split_heads");
  const std::size_t batch = x.dim(0), len = x.dim(1), width = x.dim(2);
  if (heads == 0 || width % heads != 0) {
    throw ShapeError("split_heads: width " + std::to_string(width) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t dk = width / heads;
  std::vector<T> out(x.size());
  auto xd = x.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t h = 0; h < heads; ++h) {
        std::copy_n(xd.data() + (b * len + t) * width + h * dk, dk,
                    out.data() + ((b * heads + h) * len + t) * dk);
      }
    }
  }
  return Tensor<T>::from_op(
      "split_heads", {batch * heads, len, dk}, std::move(out), {x},
      [x, batch, len, width, heads, dk](std::span<const T> g, std::span<const T>) {
        auto gx = x.grad_buffer();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t t = 0; t < len; ++t) {
            for (std::size_t h = 0; h < heads; ++h) {
              T* dst = gx.data() + (b * len + t) * width + h * dk;
              const T* src = g.data() + ((b * heads + h) * len + t) * dk;
              for (std::size_t e = 0; e < dk; ++e) dst[e] += src[e];
            }
          }
        }
      });
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, std::size_t heads) {
  require_rank(x, 3, "merge_heads");
  if (heads == 0 || x.dim(0) % heads != 0) {
    throw ShapeError("merge_heads: leading dim " + std::to_string(x.dim(0)) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t batch = x.dim(0) / heads, len = x.dim(1), dk = x.dim(2);
  const std::size_t width = heads * dk;
  std::vector<T> out(x.size());
  auto xd = x.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t t = 0; t < len; ++t) {
        std::copy_n(xd.data() + ((b * heads + h) * len + t) * dk, dk,
                    out.data() + (b * len + t) * width + h * dk);
      }
    }
  }
  return Tensor<T>::from_op(
      "merge_heads", {batch, len, width}, std::move(out), {x},
      [x, batch, len, width, heads, dk](std::span<const T> g, std::span<const T>) {
        auto gx = x.grad_buffer();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t t = 0; t < len; ++t) {
              T* dst = gx.data() + ((b * heads + h) * len + t) * dk;
              const T* src = g.data() + (b * len + t) * width + h * dk;
              for (std::size_t e = 0; e < dk; ++e) dst[e] += src[e];
            }
          }
        }
      });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() < 1 || w.rank() != 2 || x.shape().back() != w.dim(0)) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " does not match weight " +
                     to_string(w.shape()));
  }
  const std::size_t k = w.dim(0), n = w.dim(1);
  const bool has_bias = b.defined();
  if (has_bias && b.shape() != Shape{n}) {
    throw ShapeError("linear: bias " + to_string(b.shape()) + " does not match weight " +
                     to_string(w.shape()));
  }
  const std::size_t rows = x.size() / k;
  std::vector<T> out(rows * n, T(0));
  if (has_bias) {
    auto bd = b.data();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(bd.data(), n, out.data() + r * n);
  }
  kernels::gemm_acc(x.data().data(), w.data().data(), out.data(), rows, k, n);
  Shape shape = x.shape();
  shape.back() = n;
  std::vector<Tensor<T>> parents{x, w};
  if (has_bias) parents.push_back(b);
  return Tensor<T>::from_op(
      "linear", std::move(shape), std::move(out), std::move(parents),
      [x, w, b, has_bias, rows, k, n](std::span<const T> g, std::span<const T>) {
        if (x.requires_grad()) {
          kernels::gemm_nt_acc(g.data(), w.data().data(), x.grad_buffer().data(), rows, n, k);
        }
        if (w.requires_grad()) {
          kernels::gemm_tn_acc(x.data().data(), g.data(), w.grad_buffer().data(), rows, k, n);
        }
        if (has_bias && b.requires_grad()) {
          auto gb = b.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            const T* gr = g.data() + r * n;
            for (std::size_t j = 0; j < n; ++j) gb[j] += gr[j];
          }
        }
      });
}

#define OODKIT_INSTANTIATE_OPS(T)                                                        \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> transpose(const Tensor<T>&);                                        \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> scale(const Tensor<T>&, T);                                         \
  template Tensor<T> sum(const Tensor<T>&);                                              \
  template Tensor<T> mean(const Tensor<T>&);                                             \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                   \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                             \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T); \
  template Tensor<T> gelu(const Tensor<T>&);                                             \
  template Tensor<T> select(const Tensor<T>&, std::size_t, std::size_t);                 \
  template Tensor<T> concat(const Tensor<T>&, const Tensor<T>&, std::size_t);            \
  template Tensor<T> expand(const Tensor<T>&, std::size_t);                              \
  template Tensor<T> split_heads(const Tensor<T>&, std::size_t);                         \
  template Tensor<T> merge_heads(const Tensor<T>&, std::size_t);                         \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

OODKIT_INSTANTIATE_OPS(float)
OODKIT_INSTANTIATE_OPS(double)

#undef OODKIT_INSTANTIATE_OPS

}  // namespace oodkit::ops
