#include "panelnet/ad/tensor.hpp"

#include <unordered_set>

#include "panelnet/errors.hpp"

namespace panelnet::ad {

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) {
    if (d < 0) throw ShapeError("negative dimension in shape " + to_string(s));
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->value.assign(static_cast<std::size_t>(ad::numel(shape)), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from_vector(Shape shape, std::vector<T> values, bool requires_grad) {
  if (static_cast<std::int64_t>(values.size()) != ad::numel(shape)) {
    throw ShapeError("from_vector: " + std::to_string(values.size()) + " values for shape " +
                     to_string(shape));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
std::int64_t Tensor<T>::dim(int i) const {
  const int n = ndim();
  const int k = i < 0 ? n + i : i;
  if (k < 0 || k >= n) {
    throw ShapeError("dim " + std::to_string(i) + " out of range for shape " + to_string(shape()));
  }
  return node_->shape[k];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on shape " + to_string(shape()));
  return node_->value[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from_vector(node_->shape, node_->value, false);
}

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a single-element output, got " + to_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; reversed it is a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node<T>* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

template <typename T>
Tensor<T> make_op(const char* name, Shape shape, std::vector<T> value,
                  const std::vector<Tensor<T>>& inputs, std::function<void(Node<T>&)> backward) {
  if (static_cast<std::int64_t>(value.size()) != numel(shape)) {
    throw ShapeError(std::string(name) + ": produced " + std::to_string(value.size()) +
                     " values for shape " + to_string(shape));
  }
  auto node = std::make_shared<Node<T>>();
  node->op = name;
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_op(const char*, Shape, std::vector<float>,
                               const std::vector<Tensor<float>>&,
                               std::function<void(Node<float>&)>);
template Tensor<double> make_op(const char*, Shape, std::vector<double>,
                                const std::vector<Tensor<double>>&,
                                std::function<void(Node<double>&)>);

}  // namespace panelnet::ad
