#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace oodkit {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
class Tensor;
template <typename T>
class GradTape;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(std::span<const T>, std::span<const T>)> backward;
};

}  // namespace detail

// Gradient recording is on by default. While a NoGradGuard is alive on the
// current thread, ops produce plain leaves and record nothing.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major tensor with reverse-mode gradient recording.
///
/// A Tensor is a cheap handle: copies share the underlying node. Values of
/// op results are immutable; only leaves may be written through
/// mutable_data() (the optimizer does this between steps). A scalar is any
/// tensor with exactly one element; sum() and friends return shape {}.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  // Receives d(loss)/d(output) and the output values; accumulates into the
  // parents captured by the closure through grad_buffer().
  using BackwardFn = std::function<void(std::span<const T> grad_out, std::span<const T> out)>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  // Creates the result of a differentiable op. When recording is off or no
  // parent needs a gradient the result is a plain leaf.
  static Tensor from_op(const char* op, Shape shape, std::vector<T> data,
                        std::vector<Tensor> parents, BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const T> data() const;
  std::span<T> mutable_data() const;
  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool on) const;
  bool is_leaf() const;
  const char* op_name() const;
  std::vector<Tensor> parents() const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  bool has_grad() const;
  std::span<const T> grad() const;
  // Gradient storage, zero-filled on first access.
  std::span<T> grad_buffer() const;
  void accumulate_grad(std::span<const T> g) const;
  void zero_grad() const;

  // Runs reverse accumulation from this scalar. The recorded graph is
  // released afterwards; a second call on the same graph is an error.
  void backward() const;

  // Fresh leaf holding a copy of the values.
  Tensor detach() const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}
  detail::Node<T>& node() const;

  std::shared_ptr<detail::Node<T>> node_;
  friend class GradTape<T>;
};

/// Topologically ordered record of the graph behind a root tensor.
template <typename T>
class GradTape {
 public:
  static GradTape record(const Tensor<T>& root);

  // Every entry's parents appear before it; the root is last.
  const std::vector<Tensor<T>>& entries() const { return entries_; }
  std::size_t position(const Tensor<T>& t) const;

  // Seeds the root with ones and replays backward closures in reverse.
  void run_backward();

 private:
  std::vector<Tensor<T>> entries_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class GradTape<float>;
extern template class GradTape<double>;

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  std::vector<To> out(t.data().begin(), t.data().end());
  return Tensor<To>(t.shape(), std::move(out));
}

}  // namespace oodkit
