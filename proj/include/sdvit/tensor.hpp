#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sdvit {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

// Called during backward with the node whose grad is complete; pushes
// contributions into the parents' grad buffers.
using BackwardFn = std::function<void(TensorImpl& self)>;

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first accumulation
  bool requires_grad = false;

  // Provenance; empty for leaves and for results built with grad disabled.
  const char* op = nullptr;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn backward_fn;
  bool released = false;  // graph already consumed by a backward pass

  bool is_leaf() const { return op == nullptr; }
  std::vector<float>& grad_buffer();  // allocates zeros on first use
};

/// Dense row-major f32 tensor with reverse-mode autodiff.
///
/// A Tensor is a shared handle: copies alias the same storage, so parameter
/// tensors held by a model can be handed to an optimizer without copying.
/// Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f, bool requires_grad = false);
  Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

  static Tensor scalar(float value, bool requires_grad = false);
  static Tensor from_impl(std::shared_ptr<TensorImpl> impl);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<float> data();
  std::span<const float> data() const;
  float item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const float> grad() const;  // empty span when no grad yet
  void zero_grad();

  // Fresh leaf with copied data; no grad, no graph.
  Tensor detach() const;
  // Fresh leaf with copied data and the same requires_grad flag.
  Tensor clone() const;

  // Reverse pass from a scalar. Leaf grads accumulate across calls; the
  // traversed graph is released and cannot be walked again.
  void backward() const;

  const char* op_name() const;
  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

bool is_grad_enabled();

/// Disables graph recording for the lifetime of the guard (thread-local).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op result. When grad is enabled and any input requires grad,
// the result records `inputs` as parents and `fn` as its backward rule.
Tensor make_result(Shape shape, std::vector<float> data, const char* op,
                   std::initializer_list<Tensor> inputs, BackwardFn fn);
Tensor make_result(Shape shape, std::vector<float> data, const char* op,
                   const std::vector<Tensor>& inputs, BackwardFn fn);

// Accumulates `values` into the grad of parent `index` when it requires grad.
void accumulate_grad(TensorImpl& self, std::size_t index, std::span<const float> values);
// Returns the parent's grad buffer, or nullptr if the parent needs no grad.
float* parent_grad(TensorImpl& self, std::size_t index);

}  // namespace sdvit
