#include "oodkit/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "oodkit/errors.hpp"

namespace oodkit {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be >= 1, got " + to_string(shape));
  }
  if (numel(shape) != data.size()) {
    throw ShapeError("shape " + to_string(shape) + " holds " + std::to_string(numel(shape)) +
                     " elements but buffer has " + std::to_string(data.size()));
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_op(const char* op, Shape shape, std::vector<T> data,
                             std::vector<Tensor> parents, BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data));
  if (!g_grad_enabled) return out;
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) { return p.requires_grad(); });
  if (!needs) return out;
  auto& n = *out.node_;
  n.requires_grad = true;
  n.op = op;
  n.parents.reserve(parents.size());
  for (auto& p : parents) n.parents.push_back(p.node_);
  n.backward = std::move(backward);
  return out;
}

template <typename T>
detail::Node<T>& Tensor<T>::node() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return *node_;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return node().shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  return s[axis];
}

template <typename T>
std::size_t Tensor<T>::size() const {
  return node().data.size();
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return node().data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() const {
  auto& n = node();
  if (!n.parents.empty() || n.backward || n.consumed) {
    throw ContractError(std::string("values of op result '") + n.op + "' are immutable");
  }
  return n.data;
}

template <typename T>
T Tensor<T>::item() const {
  auto& n = node();
  if (n.data.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(n.shape));
  return n.data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  auto& n = node();
  if (index.size() != n.shape.size()) {
    throw ShapeError("index rank " + std::to_string(index.size()) + " for shape " +
                     to_string(n.shape));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= n.shape[axis]) throw ShapeError("index out of range for shape " + to_string(n.shape));
    flat = flat * n.shape[axis] + i;
    ++axis;
  }
  return n.data[flat];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return node().requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) const {
  if (!is_leaf()) throw ContractError("requires_grad can only be set on leaves");
  node().requires_grad = on;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  auto& n = node();
  return n.parents.empty() && !n.backward && !n.consumed;
}

template <typename T>
const char* Tensor<T>::op_name() const {
  return node().op;
}

template <typename T>
std::vector<Tensor<T>> Tensor<T>::parents() const {
  std::vector<Tensor> out;
  for (auto& p : node().parents) out.push_back(Tensor(p));
  return out;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return !node().grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  auto& n = node();
  if (n.grad.empty()) throw ContractError("tensor has no gradient");
  return n.grad;
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() const {
  auto& n = node();
  if (n.grad.empty()) n.grad.assign(n.data.size(), T(0));
  return n.grad;
}

template <typename T>
void Tensor<T>::accumulate_grad(std::span<const T> g) const {
  auto buf = grad_buffer();
  if (g.size() != buf.size()) throw ShapeError("gradient size mismatch");
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

template <typename T>
void Tensor<T>::zero_grad() const {
  auto& n = node();
  n.grad.clear();
}

template <typename T>
void Tensor<T>::backward() const {
  auto& n = node();
  if (n.data.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + to_string(n.shape));
  }
  if (n.consumed) {
    throw ContractError("backward() already ran on this graph; rebuild it with a new forward pass");
  }
  if (!n.requires_grad) {
    throw ContractError("loss does not depend on any tensor that requires a gradient");
  }
  auto tape = GradTape<T>::record(*this);
  tape.run_backward();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  auto& n = node();
  return Tensor(n.shape, n.data);
}

template <typename T>
GradTape<T> GradTape<T>::record(const Tensor<T>& root) {
  GradTape tape;
  using NodePtr = detail::Node<T>*;
  std::unordered_map<NodePtr, bool> visited;
  // Iterative post-order DFS: a node is emitted once all its parents are.
  std::vector<std::pair<std::shared_ptr<detail::Node<T>>, std::size_t>> stack;
  stack.emplace_back(root.node_, 0);
  visited[root.node_.get()] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto parent = node->parents[next++];
      if (!visited[parent.get()]) {
        visited[parent.get()] = true;
        stack.emplace_back(std::move(parent), 0);
      }
      continue;
    }
    tape.entries_.push_back(Tensor<T>(node));
    stack.pop_back();
  }
  return tape;
}

template <typename T>
std::size_t GradTape<T>::position(const Tensor<T>& t) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].same_node(t)) return i;
  }
  throw ContractError("tensor is not part of this tape");
}

template <typename T>
void GradTape<T>::run_backward() {
  if (entries_.empty()) return;
  auto& root = *entries_.back().node_;
  if (root.grad.empty()) root.grad.assign(root.data.size(), T(0));
  for (auto& g : root.grad) g += T(1);

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    auto& n = *it->node_;
    if (!n.backward) continue;
    if (!n.grad.empty()) n.backward(n.grad, n.data);
    // Release the graph as we go; interior gradients are not retained.
    n.backward = nullptr;
    n.parents.clear();
    n.consumed = true;
    std::vector<T>().swap(n.grad);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template class GradTape<float>;
template class GradTape<double>;

}  // namespace oodkit
