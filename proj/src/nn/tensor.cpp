#include "pseg/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace pseg::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::vector<float>& TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
  return grad;
}

Tensor::Tensor(Shape shape, float fill, bool requires_grad) {
  for (auto d : shape)
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
  impl_ = std::make_shared<TensorImpl>();
  impl_->data.assign(static_cast<std::size_t>(nn::numel(shape)), fill);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad) {
  if (nn::numel(shape) != static_cast<std::int64_t>(data.size()))
    throw ShapeError("shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

float Tensor::item() const {
  if (impl_->data.size() != 1)
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::clone() const {
  return Tensor(impl_->shape, impl_->data, impl_->requires_grad);
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return from_impl(std::move(impl));
}

void Tensor::backward() const {
  if (impl_->data.size() != 1)
    throw ShapeError("backward() requires a scalar loss, got shape " +
                     shape_str(shape()));

  // Iterative post-order DFS gives a topological order of the tape.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* p = node->parents[next++].get();
      if (p && p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  impl_->ensure_grad()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Shape shape, std::vector<float> data,
                   std::vector<TensorImplPtr> inputs,
                   std::function<void(TensorImpl&)> backward_fn) {
  Tensor out(std::move(shape), std::move(data));
  const bool track =
      g_grad_enabled &&
      std::any_of(inputs.begin(), inputs.end(),
                  [](const TensorImplPtr& p) { return p && p->requires_grad; });
  if (track) {
    auto& impl = *out.impl();
    impl.requires_grad = true;
    impl.parents = std::move(inputs);
    impl.backward_fn = std::move(backward_fn);
  }
  return out;
}

}  // namespace pseg::nn
