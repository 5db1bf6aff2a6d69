#include <algorithm>
#include <cmath>
#include <string>

#include "oodkit/errors.hpp"
#include "oodkit/train.hpp"

namespace oodkit {

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int64_t> labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: expected [B x C] logits, got " + to_string(logits.shape()));
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  if (labels.size() != B) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(B) +
                     " rows");
  }
  std::vector<std::int64_t> y(labels.begin(), labels.end());
  for (auto l : y) {
    if (l < 0 || static_cast<std::size_t>(l) >= C) {
      throw ContractError("cross_entropy: label " + std::to_string(l) + " outside [0, " + std::to_string(C) + ")");
    }
  }
  auto x = logits.data();
  // probs kept for the backward pass
  std::vector<T> probs(B * C);
  double total = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const T* row = x.data() + b * C;
    const T m = *std::max_element(row, row + C);
    T z = 0;
    for (std::size_t c = 0; c < C; ++c) {
      probs[b * C + c] = std::exp(row[c] - m);
      z += probs[b * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) probs[b * C + c] /= z;
    total += static_cast<double>(m + std::log(z) - row[y[b]]);
  }
  const T loss = static_cast<T>(total / static_cast<double>(B));
  return Tensor<T>::from_op(
      "cross_entropy", {}, {loss}, {logits},
      [logits, probs = std::move(probs), y = std::move(y), B, C](std::span<const T> g, std::span<const T>) {
        auto gl = logits.grad_buffer();
        const T s = g[0] / static_cast<T>(B);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t c = 0; c < C; ++c) {
            gl[b * C + c] += s * (probs[b * C + c] - (static_cast<std::int64_t>(c) == y[b] ? T(1) : T(0)));
          }
        }
      });
}

template Tensor<float> cross_entropy(const Tensor<float>&, std::span<const std::int64_t>);
template Tensor<double> cross_entropy(const Tensor<double>&, std::span<const std::int64_t>);

}  // namespace oodkit
