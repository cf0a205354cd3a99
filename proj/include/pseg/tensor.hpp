#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pseg::nn {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TensorImpl;
using TensorImplPtr = std::shared_ptr<TensorImpl>;

// Storage plus the tape entry that produced it. `backward_fn` reads this
// node's grad and accumulates into the grads of `parents`.
struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<TensorImplPtr> parents;
  std::function<void(TensorImpl&)> backward_fn;

  std::vector<float>& ensure_grad();
};

/// Shared handle to an N-d f32 array with optional gradient. Copies alias
/// the same storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f, bool requires_grad = false);
  Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), 0.0f, requires_grad);
  }
  static Tensor scalar(float v) { return Tensor(Shape{1}, v); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<float> data() { return impl_->data; }
  std::span<const float> data() const { return impl_->data; }
  float item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const float> grad() const { return impl_->grad; }
  std::span<float> mutable_grad() { return impl_->ensure_grad(); }
  void zero_grad();

  /// Runs reverse-mode differentiation from this scalar. Gradients
  /// accumulate across calls until zero_grad().
  void backward() const;

  /// Deep copy of the data, detached from the tape.
  Tensor clone() const;
  /// Same storage, no tape history.
  Tensor detach() const;

  const TensorImplPtr& impl() const { return impl_; }
  static Tensor from_impl(TensorImplPtr impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }

 private:
  TensorImplPtr impl_;
};

/// Disables tape recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// Builds the output node of an op. When recording is on and any input
// requires grad, the node keeps the inputs and the backward closure.
Tensor make_result(Shape shape, std::vector<float> data,
                   std::vector<TensorImplPtr> inputs,
                   std::function<void(TensorImpl&)> backward_fn);

}  // namespace pseg::nn
